import init, { sobol_scatter, random_scatter, BoDemo, TrainDemo } from "./pkg/kgemb_demo.js";

function clear(ctx) {
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
}

function drawScatter(canvas, flat, color) {
  const ctx = canvas.getContext("2d");
  clear(ctx);
  const pad = 8;
  const w = canvas.width - 2 * pad;
  const h = canvas.height - 2 * pad;
  ctx.fillStyle = color;
  for (let i = 0; i < flat.length; i += 2) {
    const x = pad + flat[i] * w;
    const y = pad + (1 - flat[i + 1]) * h;
    ctx.beginPath();
    ctx.arc(x, y, 2.2, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function drawSobol() {
  const n = Number(document.getElementById("sobol-n").value);
  document.getElementById("sobol-label").textContent = n;
  drawScatter(document.getElementById("sobol-canvas"), sobol_scatter(n), "#264d99");
  drawScatter(document.getElementById("random-canvas"), random_scatter(n, 7n), "#993326");
}

// ---- Bayesian optimisation ----------------------------------------------

let bo = null;

function boReset() {
  const objective = document.getElementById("bo-objective").value;
  bo = new BoDemo(objective, 11n);
  for (let i = 0; i < 4; i++) bo.step();
  drawBo();
}

function yToPx(y, lo, hi, h, pad) {
  return pad + (1 - (y - lo) / (hi - lo)) * (h - 2 * pad);
}

function drawBo() {
  const canvas = document.getElementById("bo-canvas");
  const ctx = canvas.getContext("2d");
  clear(ctx);
  const pad = 14;
  const grid = 240;
  const truth = bo.objective_curve(grid);
  const surrogate = bo.surrogate_curves(grid);
  const xs = bo.observed_x();
  const ys = bo.observed_y();

  let lo = Math.min(...truth), hi = Math.max(...truth);
  if (surrogate.length) {
    for (let i = 0; i < 2 * grid; i++) lo = Math.min(lo, surrogate[grid + i]);
    for (let i = 0; i < grid; i++) hi = Math.max(hi, surrogate[2 * grid + i]);
  }
  const span = hi - lo || 1;
  lo -= 0.08 * span; hi += 0.08 * span;

  const px = (i) => pad + (i / (grid - 1)) * (canvas.width - 2 * pad);

  if (surrogate.length) {
    // ±2σ band
    ctx.fillStyle = "rgba(120,120,140,0.25)";
    ctx.beginPath();
    for (let i = 0; i < grid; i++) {
      const y = yToPx(surrogate[2 * grid + i], lo, hi, canvas.height, pad);
      i ? ctx.lineTo(px(i), y) : ctx.moveTo(px(i), y);
    }
    for (let i = grid - 1; i >= 0; i--) {
      ctx.lineTo(px(i), yToPx(surrogate[grid + i], lo, hi, canvas.height, pad));
    }
    ctx.closePath();
    ctx.fill();
    // posterior mean
    ctx.strokeStyle = "#555";
    ctx.beginPath();
    for (let i = 0; i < grid; i++) {
      const y = yToPx(surrogate[i], lo, hi, canvas.height, pad);
      i ? ctx.lineTo(px(i), y) : ctx.moveTo(px(i), y);
    }
    ctx.stroke();
    // expected improvement, rescaled into the lower quarter
    const ei = surrogate.slice(3 * grid, 4 * grid);
    const eiMax = Math.max(...ei, 1e-12);
    ctx.strokeStyle = "#e08020";
    ctx.beginPath();
    for (let i = 0; i < grid; i++) {
      const y = canvas.height - pad - (ei[i] / eiMax) * (canvas.height / 4);
      i ? ctx.lineTo(px(i), y) : ctx.moveTo(px(i), y);
    }
    ctx.stroke();
  }

  // true objective
  ctx.strokeStyle = "#264d99";
  ctx.beginPath();
  for (let i = 0; i < grid; i++) {
    const y = yToPx(truth[i], lo, hi, canvas.height, pad);
    i ? ctx.lineTo(px(i), y) : ctx.moveTo(px(i), y);
  }
  ctx.stroke();

  // observations
  ctx.fillStyle = "#b02a2a";
  for (let i = 0; i < xs.length; i++) {
    const x = pad + xs[i] * (canvas.width - 2 * pad);
    const y = yToPx(ys[i], lo, hi, canvas.height, pad);
    ctx.beginPath();
    ctx.arc(x, y, 4, 0, 2 * Math.PI);
    ctx.fill();
  }

  const best = Math.max(...ys);
  document.getElementById("bo-status").textContent =
    `${xs.length} trials, best outcome ${best.toFixed(4)}`;
}

// ---- Live training --------------------------------------------------------

let trainer = null;

function trainReset() {
  const family = document.getElementById("train-family").value;
  const dim = Number(document.getElementById("train-dim").value);
  const lr = Number(document.getElementById("train-lr").value);
  trainer = new TrainDemo(family, dim, lr, 3n);
  document.getElementById("status").textContent =
    `${trainer.edge_count()} training edges, ${trainer.holdout_count()} held out`;
  drawTraining();
}

function drawSeries(canvas, seriesList, colors, yLo, yHi) {
  const ctx = canvas.getContext("2d");
  clear(ctx);
  const pad = 24;
  const n = Math.max(...seriesList.map((s) => s.length), 2);
  ctx.strokeStyle = "#bbb";
  ctx.strokeRect(pad, pad, canvas.width - 2 * pad, canvas.height - 2 * pad);
  seriesList.forEach((series, k) => {
    if (!series.length) return;
    ctx.strokeStyle = colors[k];
    ctx.lineWidth = 1.8;
    ctx.beginPath();
    series.forEach((v, i) => {
      const x = pad + (i / (n - 1)) * (canvas.width - 2 * pad);
      const y = pad + (1 - (v - yLo) / (yHi - yLo)) * (canvas.height - 2 * pad);
      i ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
    });
    ctx.stroke();
  });
  ctx.lineWidth = 1;
}

function drawTraining() {
  const losses = Array.from(trainer.loss_history());
  const lossHi = losses.length ? Math.max(...losses) * 1.05 : 1;
  drawSeries(document.getElementById("loss-canvas"), [losses], ["#883388"], 0, lossHi);
  drawSeries(
    document.getElementById("metric-canvas"),
    [Array.from(trainer.auroc_history()), Array.from(trainer.auprc_history())],
    ["#264d99", "#2a7a2a"],
    0.4,
    1.0
  );
  if (losses.length) {
    const aur = trainer.auroc_history();
    document.getElementById("status").textContent =
      `epoch ${trainer.epochs()}: loss ${losses[losses.length - 1].toFixed(4)}, ` +
      `median AUROC ${aur[aur.length - 1].toFixed(4)}`;
  }
}

function runEpochs(k) {
  for (let i = 0; i < k; i++) trainer.run_epoch();
  drawTraining();
}

await init();

document.getElementById("sobol-n").addEventListener("input", drawSobol);
document.getElementById("bo-step").addEventListener("click", () => { bo.step(); drawBo(); });
document.getElementById("bo-five").addEventListener("click", () => {
  for (let i = 0; i < 5; i++) bo.step();
  drawBo();
});
document.getElementById("bo-reset").addEventListener("click", boReset);
document.getElementById("bo-objective").addEventListener("change", boReset);
document.getElementById("train-epoch").addEventListener("click", () => runEpochs(1));
document.getElementById("train-five").addEventListener("click", () => runEpochs(5));
document.getElementById("train-reset").addEventListener("click", trainReset);
document.getElementById("train-family").addEventListener("change", trainReset);
document.getElementById("train-dim").addEventListener("change", trainReset);

drawSobol();
boReset();
trainReset();
