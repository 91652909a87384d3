import init, { version, optimizeEdges, abstractGridworld, trainAgents } from "./pkg/setree_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function fail(target, e) {
  target.innerHTML = `<span class="err">${e.message ?? e}</span>`;
}

function palette(i) {
  const hue = (i * 137.508) % 360;
  return `hsl(${hue}, 65%, ${55 + (i % 3) * 8}%)`;
}

function plotLines(canvas, series, { yLabel = "" } = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 36;
  ctx.clearRect(0, 0, w, h);
  const all = series.flatMap((s) => s.points);
  if (all.length === 0) return;
  const xs = all.map((p) => p[0]);
  const ys = all.map((p) => p[1]);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (y0 === y1) { y0 -= 1; y1 += 1; }
  const sx = (x) => pad + ((x - x0) / Math.max(x1 - x0, 1e-12)) * (w - 2 * pad);
  const sy = (y) => h - pad - ((y - y0) / (y1 - y0)) * (h - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.fillText(y1.toFixed(2), 2, pad + 4);
  ctx.fillText(y0.toFixed(2), 2, h - pad);
  ctx.fillText(String(x0), pad, h - pad + 14);
  ctx.fillText(String(x1), w - pad - 20, h - pad + 14);
  ctx.fillText(yLabel, pad + 4, pad - 6);

  series.forEach((s, k) => {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.points.forEach(([x, y], i) => (i ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
    ctx.stroke();
    ctx.fillStyle = s.color;
    ctx.fillText(s.label, w - pad - 90, pad + 14 + 14 * k);
  });
}

function smooth(values, window) {
  const out = [];
  let sum = 0;
  values.forEach((v, i) => {
    sum += v;
    if (i >= window) sum -= values[i - window];
    out.push([i + 1, sum / Math.min(i + 1, window)]);
  });
  return out;
}

function drawGrid(result) {
  const canvas = $("grid");
  const ctx = canvas.getContext("2d");
  const cw = canvas.width / result.width;
  const ch = canvas.height / result.height;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  result.cells.forEach((states, cell) => {
    const x = (cell % result.width) * cw;
    const y = Math.floor(cell / result.width) * ch;
    // one vertical stripe per observation, colored by its abstract state
    const sw = cw / states.length;
    states.forEach((s, k) => {
      ctx.fillStyle = palette(s);
      ctx.fillRect(x + k * sw, y, sw, ch);
    });
    ctx.strokeStyle = "#fff";
    ctx.strokeRect(x, y, cw, ch);
  });
}

function runOptimize() {
  try {
    const r = JSON.parse(optimizeEdges($("edges").value.replace(/ +/g, "\t"), num("kcap")));
    $("tree-summary").textContent =
      `entropy ${r.initial_entropy.toFixed(6)} → ${r.final_entropy.toFixed(6)}; ` +
      `root children: ${r.clusters.map((c) => "{" + c.join(", ") + "}").join(" ")}`;
    $("tree-log").textContent = ["step,kind,beta1,beta2,delta"]
      .concat(r.operators.map((o) => `${o.step},${o.kind},${o.beta1},${o.beta2},${o.delta.toFixed(6)}`))
      .join("\n");
  } catch (e) {
    fail($("tree-summary"), e);
    $("tree-log").textContent = "";
  }
}

function gridArgs() {
  return [num("gw"), num("gh"), num("sigma"), num("samples")];
}

function runAbstract() {
  try {
    const r = JSON.parse(abstractGridworld(...gridArgs(), BigInt(num("seed"))));
    $("grid-summary").textContent =
      `${r.abstract_states} abstract states, ARI ${r.ari.toFixed(4)}` + (r.k_star ? `, k* = ${r.k_star}` : "");
    drawGrid(r);
    plotLines($("curve"), [{ label: "H1(G_k)", color: "#2a6", points: r.entropy_curve }], { yLabel: "entropy vs k" });
  } catch (e) {
    fail($("grid-summary"), e);
  }
}

function runTrain() {
  $("train-summary").textContent = "training…";
  setTimeout(() => {
    try {
      const r = JSON.parse(trainAgents(...gridArgs(), num("episodes"), BigInt(num("seed"))));
      const colors = { learned: "#c33", identity: "#36c", constant: "#999" };
      $("train-summary").textContent =
        `optimal mean return ${r.oracle_mean_return.toFixed(3)}; greedy evaluation: ` +
        r.runs.map((x) => `${x.label} ${x.eval_mean_reward.toFixed(2)}`).join(", ");
      const window = Math.max(1, Math.round(num("episodes") / 50));
      plotLines(
        $("returns"),
        r.runs.map((x) => ({ label: x.label, color: colors[x.label], points: smooth(x.returns, window) })),
        { yLabel: `episode return (moving mean, ${window})` },
      );
    } catch (e) {
      fail($("train-summary"), e);
    }
  }, 10);
}

await init();
$("version").textContent = `v${version()}`;
$("optimize").addEventListener("click", runOptimize);
$("abstract").addEventListener("click", runAbstract);
$("train").addEventListener("click", runTrain);
runOptimize();
runAbstract();
