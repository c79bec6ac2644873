import init, { trajectoryTimes, rolloutSamples, dataSamples, noiseCurve, rCurve } from "./pkg/cmlab_demo.js";

const HALF_PI = Math.PI / 2;
const $ = (id) => document.getElementById(id);

function clear(ctx) {
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
}

function axes(ctx, pad) {
  const { width: w, height: h } = ctx.canvas;
  ctx.strokeStyle = "#888";
  ctx.beginPath();
  ctx.moveTo(pad, pad);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad, h - pad);
  ctx.stroke();
}

function drawTimes() {
  const n = Number($("times-n").value);
  $("times-n-val").textContent = n;
  const draws = 400;
  const t = trajectoryTimes($("scheme").value, n, draws, 1n);
  const ctx = $("times").getContext("2d");
  clear(ctx);
  const pad = 20, bins = 90;
  const { width: w, height: h } = ctx.canvas;
  const counts = new Array(bins).fill(0);
  for (const v of t) counts[Math.min(bins - 1, Math.floor((v / HALF_PI) * bins))] += 1;
  const top = Math.max(...counts.slice(0, bins - 1), 1);
  const bw = (w - 2 * pad) / bins;
  ctx.fillStyle = "#4a7ab7";
  counts.forEach((c, i) => {
    const bh = Math.min(1, c / top) * (h - 2 * pad);
    ctx.fillRect(pad + i * bw, h - pad - bh, bw - 1, bh);
  });
  axes(ctx, pad);
  ctx.fillStyle = "#222";
  ctx.fillText("0", pad, h - 5);
  ctx.fillText("π/2", w - pad - 20, h - 5);
}

function drawCloud() {
  const steps = Number($("steps").value);
  const seed = BigInt(Math.max(0, Number($("seed").value) | 0));
  $("steps-val").textContent = steps;
  const points = 1500;
  const ctx = $("cloud").getContext("2d");
  clear(ctx);
  const { width: w, height: h } = ctx.canvas;
  const scale = w / 3.2;
  const plot = (xy, colour) => {
    ctx.fillStyle = colour;
    for (let i = 0; i < xy.length; i += 2) {
      ctx.fillRect(w / 2 + xy[i] * scale - 1, h / 2 - xy[i + 1] * scale - 1, 2, 2);
    }
  };
  plot(dataSamples(points, seed + 1000n), "rgba(150,150,150,0.5)");
  plot(rolloutSamples(points, steps, seed), "rgba(200,60,40,0.7)");

  const curve = noiseCurve(256, steps, seed);
  const nctx = $("noise").getContext("2d");
  clear(nctx);
  const pad = 30;
  axes(nctx, pad);
  const nw = nctx.canvas.width - 2 * pad, nh = nctx.canvas.height - 2 * pad;
  nctx.strokeStyle = "#2a8a4a";
  nctx.beginPath();
  for (let i = 0; i < curve.length; i += 2) {
    const x = pad + (1 - curve[i] / HALF_PI) * nw;
    const y = pad + (1 - curve[i + 1]) * nh;
    if (i === 0) nctx.moveTo(x, y); else nctx.lineTo(x, y);
  }
  nctx.stroke();
  nctx.fillStyle = "#222";
  nctx.fillText("similarity to initial noise", pad + 4, pad - 8);
  nctx.fillText("π/2", pad - 10, nctx.canvas.height - 10);
  nctx.fillText("0", nctx.canvas.width - pad - 4, nctx.canvas.height - 10);
}

function drawR() {
  const warmup = Number($("warmup").value);
  const rf = Number($("rf").value);
  $("warmup-val").textContent = warmup;
  $("rf-val").textContent = rf.toFixed(2);
  const total = 8000;
  const r = rCurve(BigInt(total), BigInt(warmup), rf, 400);
  const ctx = $("rcurve").getContext("2d");
  clear(ctx);
  const pad = 20;
  axes(ctx, pad);
  const { width: w, height: h } = ctx.canvas;
  ctx.strokeStyle = "#7a3ab7";
  ctx.beginPath();
  r.forEach((v, i) => {
    const x = pad + (i / (r.length - 1)) * (w - 2 * pad);
    const y = h - pad - v * (h - 2 * pad);
    if (i === 0) ctx.moveTo(x, y); else ctx.lineTo(x, y);
  });
  ctx.stroke();
  ctx.fillStyle = "#222";
  ctx.fillText(`${total} iterations`, w - pad - 80, h - 5);
}

function guard(f) {
  return () => {
    try {
      $("error").textContent = "";
      f();
    } catch (e) {
      $("error").textContent = String(e);
    }
  };
}

await init();
for (const [ids, f] of [
  [["scheme", "times-n"], drawTimes],
  [["steps", "seed"], drawCloud],
  [["warmup", "rf"], drawR],
]) {
  const g = guard(f);
  ids.forEach((id) => $(id).addEventListener("input", g));
  g();
}
