use std::collections::BTreeMap;

use proptest::prelude::*;

use rbcorr::correction::{rbcorr_term, sample_calibration};
use rbcorr::ingest::{merge_variants, read_records, save_store, RecordStore};
use rbcorr::metrics::{eval_all, respond, tvd, LabelDistribution};
use rbcorr::model::{
    CorrectionTerm, LogProbRecord, Method, PromptFormat, Provenance, QuestionType, RecordGroup, RunConfig,
};
use rbcorr::synthetic::{generate_group, SyntheticSpec};
use rbcorr::transfer::score_transfer;

fn qt_for(arity: usize) -> QuestionType {
    QuestionType::from_arity(arity).unwrap()
}

fn run_for(arity: usize) -> RunConfig {
    let format = if arity == 3 {
        PromptFormat::Fewshot
    } else {
        PromptFormat::Zeroshot
    };
    RunConfig::new("m", "fam", "d", format, qt_for(arity))
}

fn distribution(arity: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, arity).prop_filter_map("zero mass", |w| {
        let s: f64 = w.iter().sum();
        (s > 1e-6).then(|| w.iter().map(|x| x / s).collect())
    })
}

fn label_dist(arity: usize, p: Vec<f64>) -> LabelDistribution {
    LabelDistribution::new(qt_for(arity).option_space(), p, 1).unwrap()
}

/// Random group: per-item scores with gold labels cycling through classes.
fn group_strategy(min_per_class: usize, max_per_class: usize) -> impl Strategy<Value = RecordGroup> {
    (2usize..=4, min_per_class..=max_per_class).prop_flat_map(|(arity, per_class)| {
        prop::collection::vec(prop::collection::vec(-30.0f64..0.0, arity), arity * per_class)
            .prop_map(move |rows| build_group(arity, &rows))
    })
}

fn build_group(arity: usize, rows: &[Vec<f64>]) -> RecordGroup {
    let run = run_for(arity);
    let space = run.option_space();
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, s)| LogProbRecord {
            item_id: format!("item-{i}"),
            run: run.clone(),
            option_logprobs: space.to_map(s),
            raw_variants: None,
            gold_label: space.label(i % arity).to_string(),
            is_content_free: false,
            missing_variants: Vec::new(),
        })
        .collect();
    RecordGroup::new(run, records).unwrap()
}

fn term(arity: usize, offsets: &[f64]) -> CorrectionTerm {
    let provenance = Provenance {
        run: None,
        set_size: 0,
        seed: None,
        item_ids: Vec::new(),
    };
    CorrectionTerm::from_dense(Method::Rbcorr, &qt_for(arity).option_space(), offsets, provenance)
}

fn naive_argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..v.len() {
        if v[j] > v[best] {
            best = j;
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn tvd_is_symmetric_and_bounded((arity, p, q) in (2usize..=4).prop_flat_map(|a| (Just(a), distribution(a), distribution(a)))) {
        let (g, m) = (label_dist(arity, p.clone()), label_dist(arity, q));
        let d = tvd(&g, &m).unwrap();
        prop_assert_eq!(d, tvd(&m, &g).unwrap());
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
        prop_assert_eq!(tvd(&g, &label_dist(arity, p)).unwrap(), 0.0);
    }

    #[test]
    fn tvd_equals_largest_event_gap((arity, p, q) in (2usize..=4).prop_flat_map(|a| (Just(a), distribution(a), distribution(a)))) {
        let mut best: f64 = 0.0;
        for mask in 0u32..(1 << arity) {
            let gap: f64 = (0..arity).filter(|j| mask & (1 << j) != 0).map(|j| p[j] - q[j]).sum();
            best = best.max(gap.abs());
        }
        let d = tvd(&label_dist(arity, p), &label_dist(arity, q)).unwrap();
        prop_assert!((d - best).abs() <= 1e-12);
    }

    #[test]
    fn response_ignores_common_shifts(
        (arity, scores, offsets) in (2usize..=4).prop_flat_map(|a| (Just(a), prop::collection::vec(-20.0f64..0.0, a), prop::collection::vec(-5.0f64..5.0, a))),
        c in -10.0f64..10.0,
        k in -10.0f64..10.0,
    ) {
        let g = build_group(arity, std::slice::from_ref(&scores));
        let r = &g.records()[0];
        let corrected: Vec<f64> = scores.iter().zip(&offsets).map(|(s, o)| s - o).collect();
        let mut sorted = corrected.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        prop_assume!(sorted[0] - sorted[1] > 1e-9);
        let base = respond(r, &term(arity, &offsets)).unwrap();
        let shifted: Vec<f64> = offsets.iter().map(|o| o + c).collect();
        prop_assert_eq!(&base, &respond(r, &term(arity, &shifted)).unwrap());
        prop_assert_eq!(&base, g.space().label(naive_argmax(&corrected)));
        let g2 = build_group(arity, &[scores.iter().map(|s| s + k).collect::<Vec<_>>()]);
        prop_assert_eq!(&base, &respond(&g2.records()[0], &term(arity, &offsets)).unwrap());
    }

    #[test]
    fn eval_all_matches_brute_force(g in group_strategy(1, 3), offs in prop::collection::vec(-3.0f64..3.0, 4)) {
        let a = g.arity();
        let offsets = &offs[..a];
        let r = eval_all(&g, &term(a, offsets)).unwrap();
        let mut counts = vec![0usize; a];
        let mut hits = vec![0usize; a];
        let mut totals = vec![0usize; a];
        for i in 0..g.len() {
            let c: Vec<f64> = g.scores(i).iter().zip(offsets).map(|(s, o)| s - o).collect();
            let resp = naive_argmax(&c);
            counts[resp] += 1;
            totals[g.gold(i)] += 1;
            if resp == g.gold(i) { hits[g.gold(i)] += 1; }
        }
        let n = g.len() as f64;
        let acc = hits.iter().sum::<usize>() as f64 / n;
        let tv = 0.5 * counts.iter().map(|&c| (c as f64 / n - 1.0 / a as f64).abs()).sum::<f64>();
        let recalls: Vec<f64> = hits.iter().zip(&totals).map(|(&h, &t)| h as f64 / t as f64).collect();
        let mean = recalls.iter().sum::<f64>() / a as f64;
        let sd = (recalls.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / a as f64).sqrt();
        prop_assert!((r.accuracy - acc).abs() < 1e-12);
        prop_assert!((r.tvd - tv).abs() < 1e-12);
        prop_assert!((r.rstd - sd).abs() < 1e-12);
        // balanced classes: accuracy is the mean recall
        prop_assert!((r.accuracy - mean).abs() < 1e-12);
        prop_assert_eq!(r.n_items, g.len());
    }

    #[test]
    fn full_group_rbcorr_zeroes_corrected_means(g in group_strategy(1, 8)) {
        let s = sample_calibration(&g, g.len(), 0).unwrap();
        let t = rbcorr_term(&g, &s).unwrap();
        let off = t.dense(g.space()).unwrap();
        for (j, o) in off.iter().enumerate() {
            let mean = (0..g.len()).map(|i| g.scores(i)[j] - o).sum::<f64>() / g.len() as f64;
            prop_assert!(mean.abs() <= 1e-9, "option {j}: {mean}");
        }
    }

    #[test]
    fn rbcorr_ignores_item_order(g in group_strategy(2, 6), seed in any::<u64>()) {
        let size = g.len() / 2;
        let s = sample_calibration(&g, size, seed).unwrap();
        let t = rbcorr_term(&g, &s).unwrap();
        // rebuild the calibration items in reverse order and take the full set
        let mut rev = s.indices.clone();
        rev.reverse();
        let sub = g.select(&rev);
        let full = sample_calibration(&sub, sub.len(), seed).unwrap();
        let t2 = rbcorr_term(&sub, &full).unwrap();
        let (a, b) = (t.dense(g.space()).unwrap(), t2.dense(g.space()).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn merge_is_order_free_and_dominates(v in prop::collection::vec(-50.0f64..0.0, 1..6), rot in 0usize..6) {
        let variants: Vec<(String, f64)> = v.iter().enumerate().map(|(i, x)| (format!("t{i}"), *x)).collect();
        let m = merge_variants(&variants).unwrap();
        let mut rotated = variants.clone();
        rotated.rotate_left(rot % variants.len());
        prop_assert!((m - merge_variants(&rotated).unwrap()).abs() <= 1e-12);
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(m >= max);
        let naive = v.iter().map(|x| x.exp()).sum::<f64>().ln();
        prop_assert!((m - naive).abs() <= 1e-9);
    }

    #[test]
    fn store_round_trips(g in group_strategy(1, 4)) {
        let store = RecordStore::from_records(g.clone().into_records()).unwrap();
        let mut buf = Vec::new();
        save_store(&store, &mut buf).unwrap();
        let back = read_records(buf.as_slice()).unwrap();
        prop_assert_eq!(back, store.into_records());
    }

    #[test]
    fn larger_bias_never_reduces_its_share(seed in any::<u64>(), b1 in 0.0f64..3.0, extra in 0.0f64..3.0) {
        let share = |b: f64| {
            let spec = SyntheticSpec::new(QuestionType::TwoChoice, 50, 1.0, 0.7, vec![0.0, b], seed);
            let (g, _) = generate_group(&spec).unwrap();
            let r = eval_all(&g, &CorrectionTerm::identity(g.space())).unwrap();
            (r.label_distribution["No"], r.tvd)
        };
        let (p1, t1) = share(b1);
        let (p2, t2) = share(b1 + extra);
        prop_assert!(p2 >= p1);
        if p1 >= 0.5 {
            prop_assert!(t2 >= t1);
        }
    }

    #[test]
    fn noise_free_bias_tvd_is_monotone(b1 in 0.0f64..4.0, extra in 0.0f64..4.0) {
        let tvd_at = |b: f64| {
            let spec = SyntheticSpec::new(QuestionType::TwoChoice, 5, 1.0, 0.0, vec![0.0, b], 3);
            let (g, _) = generate_group(&spec).unwrap();
            eval_all(&g, &CorrectionTerm::identity(g.space())).unwrap().tvd
        };
        prop_assert!(tvd_at(b1 + extra) >= tvd_at(b1));
    }

    #[test]
    fn transfer_success_is_monotone(
        same_acc in 0.001f64..0.5,
        same_tvd in -0.5f64..-0.001,
        dacc in -0.5f64..0.5,
        dtvd in -0.5f64..0.5,
        up in 0.0f64..0.3,
        down in 0.0f64..0.3,
    ) {
        let (ok, _) = score_transfer(dacc, dtvd, same_acc, same_tvd);
        if ok {
            prop_assert!(score_transfer(dacc + up, dtvd - down, same_acc, same_tvd).0);
        }
    }
}

#[test]
fn distribution_map_matches_labels() {
    let d = label_dist(2, vec![0.25, 0.75]);
    let m: BTreeMap<String, f64> = d.to_map();
    assert_eq!(m["Yes"], 0.25);
    assert_eq!(m["No"], 0.75);
}
