import init, { simulate_kt, classify, lax_residual_scan } from "./pkg/birkhoff_lax_wasm.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"];

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function showError(out, err) {
  out.className = "error";
  out.textContent = String(err);
}

// Draws each series in `ys` against `xs`; `log` plots log10 of the values.
function plot(canvas, xs, ys, { log = false, labels = [] } = {}) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 40;
  ctx.clearRect(0, 0, w, h);
  const tf = log ? (v) => Math.log10(Math.max(v, 1e-18)) : (v) => v;
  const flat = ys.flat().map(tf);
  let lo = Math.min(...flat), hi = Math.max(...flat);
  if (hi - lo < 1e-12) { lo -= 1; hi += 1; }
  const x0 = xs[0], x1 = xs[xs.length - 1];
  const px = (x) => pad + (w - 2 * pad) * (x - x0) / (x1 - x0 || 1);
  const py = (y) => h - pad - (h - 2 * pad) * (tf(y) - lo) / (hi - lo);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#333";
  ctx.font = "12px sans-serif";
  ctx.fillText((log ? "1e" : "") + hi.toPrecision(3), 2, pad);
  ctx.fillText((log ? "1e" : "") + lo.toPrecision(3), 2, h - pad);
  ctx.fillText(x0.toPrecision(3), pad, h - pad + 15);
  ctx.fillText(x1.toPrecision(3), w - pad - 30, h - pad + 15);
  ys.forEach((series, k) => {
    ctx.strokeStyle = COLORS[k % COLORS.length];
    ctx.beginPath();
    series.forEach((y, i) => (i ? ctx.lineTo(px(xs[i]), py(y)) : ctx.moveTo(px(xs[i]), py(y))));
    ctx.stroke();
    if (labels[k]) {
      ctx.fillStyle = ctx.strokeStyle;
      ctx.fillText(labels[k], w - pad + 4, pad + 14 * k + 10);
    }
  });
}

const transpose = (rows) => rows[0].map((_, j) => rows.map((r) => r[j]));

function runSimulation() {
  const out = $("sim-out");
  try {
    const v = JSON.parse(simulate_kt(num("sim-n"), num("sim-seed"), num("sim-t"), 600));
    out.className = "";
    plot($("sim-b"), v.times, transpose(v.b), { labels: v.b[0].map((_, i) => `b${i + 1}`) });
    plot($("sim-drift"), v.times.slice(1), transpose(v.drift.slice(1)), { log: true, labels: v.integral_names });
    const worst = Math.max(...v.drift.flat());
    out.textContent = `${v.completed ? "completed" : "stopped early"}: ${v.accepted_steps} accepted, `
      + `${v.rejected_steps} rejected steps; max relative drift ${worst.toExponential(2)}`;
  } catch (e) { showError(out, e); }
}

function drawDiagram(canvas, v) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, r = Math.min(w, h) / 2 - 30;
  ctx.clearRect(0, 0, w, h);
  const k = v.weights.length;
  const pos = v.weights.map((_, i) => [w / 2 + r * Math.cos(2 * Math.PI * i / k), h / 2 + r * Math.sin(2 * Math.PI * i / k)]);
  ctx.font = "12px sans-serif";
  for (const e of v.edges) {
    const [a, b] = [pos[e.i], pos[e.j]];
    ctx.strokeStyle = "#555";
    ctx.lineWidth = e.multiplicity;
    ctx.beginPath(); ctx.moveTo(...a); ctx.lineTo(...b); ctx.stroke();
    ctx.fillStyle = "#555";
    ctx.fillText(String(e.multiplicity), (a[0] + b[0]) / 2 + 4, (a[1] + b[1]) / 2 - 4);
  }
  ctx.lineWidth = 1;
  v.weights.forEach((wt, i) => {
    const [x, y] = pos[i];
    ctx.fillStyle = v.maximal.includes(i) ? "#d62728" : "#1f77b4";
    ctx.beginPath(); ctx.arc(x, y, 12, 0, 2 * Math.PI); ctx.fill();
    ctx.fillStyle = "#fff";
    ctx.fillText(String(wt), x - 4, y + 4);
  });
}

function runClassify() {
  const out = $("cls-out");
  try {
    const v = JSON.parse(classify($("cls-input").value));
    out.className = "";
    drawDiagram($("cls-diagram"), v);
    const lines = [`necessary condition: ${v.pass ? "holds" : "violated"}`,
      v.diagram_error ? `no diagram: ${v.diagram_error}` : `weights: ${v.weights.join(", ")}`];
    for (const [m, o, ratio] of v.violations) lines.push(`pair (${m}, ${o}): ratio ${ratio.toPrecision(6)}`);
    out.textContent = lines.join("\n");
  } catch (e) { showError(out, e); }
}

function runScan() {
  const out = $("scan-out");
  try {
    const v = JSON.parse(lax_residual_scan(num("scan-n"), num("scan-seed"), 0, num("scan-hi"), 200));
    out.className = "";
    plot($("scan-plot"), v.coupling, [v.corrected, v.printed], { log: true, labels: ["corrected", "printed"] });
    out.textContent = `max residual: corrected ${Math.max(...v.corrected).toExponential(2)}, `
      + `printed ${Math.max(...v.printed).toExponential(2)}`;
  } catch (e) { showError(out, e); }
}

await init();
$("sim-run").onclick = runSimulation;
$("cls-run").onclick = runClassify;
$("scan-run").onclick = runScan;
runSimulation();
runClassify();
runScan();
