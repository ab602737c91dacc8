import init, { simulate, sweep, tvd } from "./pkg/rbcorr_wasm.js";

const $ = (id) => document.getElementById(id);
const numbers = (s) => s.split(",").map((x) => x.trim()).filter((x) => x !== "").map(Number);

function call(fn, params) {
  const out = JSON.parse(fn(JSON.stringify(params)));
  if (out && out.error) throw new Error(out.error);
  return out;
}

function groupParams() {
  const arity = Number($("arity").value);
  const bias = numbers($("bias").value);
  while (bias.length < arity) bias.push(0);
  return {
    arity,
    n_per_class: Number($("n").value),
    margin: Number($("margin").value),
    noise: Number($("noise").value),
    bias: bias.slice(0, arity),
    seed: Number($("seed").value),
  };
}

function showError(el, e) {
  el.innerHTML = "";
  const p = document.createElement("p");
  p.className = "error";
  p.textContent = e.message;
  el.appendChild(p);
}

const pct = (x) => (100 * x).toFixed(1);

function runSimulate() {
  const el = $("simulate-out");
  try {
    const r = call(simulate, { ...groupParams(), calibration_size: Number($("calsize").value) });
    const rows = r.labels.map((label, j) => `
      <tr><td>${label}</td><td>${r.offsets[j].toFixed(3)}</td>
        <td>${pct(r.before.distribution[j])}%</td><td><span class="bar" style="width:${200 * r.before.distribution[j]}px"></span></td>
        <td>${pct(r.after.distribution[j])}%</td><td><span class="bar after" style="width:${200 * r.after.distribution[j]}px"></span></td></tr>`);
    el.innerHTML = `
      <table>
        <tr><th>label</th><th>offset</th><th colspan="2">before</th><th colspan="2">after</th></tr>
        ${rows.join("")}
      </table>
      <table>
        <tr><th></th><th>accuracy</th><th>tvd</th><th>rstd</th></tr>
        <tr><td>before</td><td>${pct(r.before.accuracy)}%</td><td>${r.before.tvd.toFixed(3)}</td><td>${r.before.rstd.toFixed(3)}</td></tr>
        <tr><td>after</td><td>${pct(r.after.accuracy)}%</td><td>${r.after.tvd.toFixed(3)}</td><td>${r.after.rstd.toFixed(3)}</td></tr>
      </table>`;
  } catch (e) {
    showError(el, e);
  }
}

function plot(points) {
  const w = 560, h = 260, pad = 40;
  const xs = points.map((p) => Math.log10(p.size));
  const ys = points.flatMap((p) => [p.q1, p.q3, p.baseline_accuracy]);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs) || 1];
  const [y0, y1] = [Math.min(...ys) - 0.02, Math.max(...ys) + 0.02];
  const sx = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const sy = (y) => h - pad - ((y - y0) / (y1 - y0)) * (h - 2 * pad);
  const band = points.map((p) => `${sx(Math.log10(p.size))},${sy(p.q3)}`)
    .concat(points.slice().reverse().map((p) => `${sx(Math.log10(p.size))},${sy(p.q1)}`)).join(" ");
  const line = points.map((p) => `${sx(Math.log10(p.size))},${sy(p.mean_accuracy)}`).join(" ");
  const base = sy(points[0].baseline_accuracy);
  const ticks = points.map((p) => `<text x="${sx(Math.log10(p.size))}" y="${h - pad + 16}" font-size="11" text-anchor="middle">${p.size}</text>`);
  return `<svg width="${w}" height="${h}">
    <polygon points="${band}" fill="#4a7bd0" fill-opacity="0.2"/>
    <polyline points="${line}" fill="none" stroke="#4a7bd0" stroke-width="2"/>
    <line x1="${pad}" x2="${w - pad}" y1="${base}" y2="${base}" stroke="#999" stroke-dasharray="4 3"/>
    <text x="${w - pad}" y="${base - 4}" font-size="11" text-anchor="end">uncorrected</text>
    <text x="${pad}" y="${sy(y1) + 10}" font-size="11">${pct(y1)}%</text>
    <text x="${pad}" y="${sy(y0)}" font-size="11">${pct(y0)}%</text>
    ${ticks.join("")}
  </svg>`;
}

function runSweep() {
  const el = $("sweep-out");
  el.textContent = "running...";
  setTimeout(() => {
    try {
      const points = call(sweep, { ...groupParams(), sizes: numbers($("sizes").value), iterations: Number($("iters").value) });
      const rows = points.map((p) => `<tr><td>${p.size}</td><td>${pct(p.mean_accuracy)}%</td><td>${pct(p.q1)}% to ${pct(p.q3)}%</td><td>${p.median_tvd.toFixed(3)}</td></tr>`);
      el.innerHTML = plot(points) + `<table><tr><th>size</th><th>mean accuracy</th><th>IQR</th><th>median tvd</th></tr>${rows.join("")}</table>`;
    } catch (e) {
      showError(el, e);
    }
  }, 0);
}

function runTvd() {
  const el = $("tvd-out");
  try {
    const r = call(tvd, { gold: numbers($("tvd-gold").value), model: numbers($("tvd-model").value) });
    el.textContent = `tvd = ${r.tvd.toFixed(4)}`;
    el.className = "";
  } catch (e) {
    el.textContent = e.message;
    el.className = "error";
  }
}

await init();
$("run-simulate").addEventListener("click", runSimulate);
$("run-sweep").addEventListener("click", runSweep);
$("run-tvd").addEventListener("click", runTvd);
runSimulate();
