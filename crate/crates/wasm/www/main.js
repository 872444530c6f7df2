import init, { Demo, exposure_curve, display_likelihood } from "./pkg/relight_wasm.js";

const SIZE = 128;
const DELTA = 1 / 60;

const $ = (id) => document.getElementById(id);
const sliders = ["azimuth", "elevation", "ambient", "lambda_g", "lambda_u", "alpha_t"];
// log-scale sliders hold log10 of the weight
const logScale = new Set(["lambda_g", "lambda_u"]);

function value(id) {
  const v = parseFloat($(id).value);
  return logScale.has(id) ? Math.pow(10, v) : v;
}

function showValues() {
  for (const id of sliders) {
    const v = value(id);
    const out = document.querySelector(`output[for="${id}"]`);
    out.textContent = logScale.has(id) ? v.toPrecision(2) : String(v);
  }
}

function paint(id, rgba) {
  const canvas = $(id);
  canvas.width = SIZE;
  canvas.height = SIZE;
  const data = new ImageData(new Uint8ClampedArray(rgba), SIZE, SIZE);
  canvas.getContext("2d").putImageData(data, 0, 0);
}

function drawCurve(alphaT) {
  const canvas = $("curve");
  const w = (canvas.width = canvas.clientWidth * devicePixelRatio);
  const h = (canvas.height = canvas.clientHeight * devicePixelRatio);
  const ctx = canvas.getContext("2d");
  const pad = 8 * devicePixelRatio;
  const x = (l) => pad + (l / 255) * (w - 2 * pad);
  const y = (v) => h - pad - v * (h - 2 * pad);
  ctx.clearRect(0, 0, w, h);

  ctx.strokeStyle = "#ccc";
  ctx.setLineDash([4, 4]);
  ctx.beginPath();
  ctx.moveTo(x(0), y(0.5));
  ctx.lineTo(x(255), y(0.5));
  ctx.stroke();
  ctx.setLineDash([]);

  const curve = exposure_curve(alphaT, DELTA);
  ctx.strokeStyle = "#2a6ee6";
  ctx.lineWidth = 2 * devicePixelRatio;
  ctx.beginPath();
  curve.forEach((v, l) => {
    const yy = y(display_likelihood(v));
    l === 0 ? ctx.moveTo(x(l), yy) : ctx.lineTo(x(l), yy);
  });
  ctx.stroke();

  const crossing = curve.findIndex((v) => v < 1);
  if (crossing > 0) {
    ctx.fillStyle = "#444";
    ctx.font = `${11 * devicePixelRatio}px system-ui`;
    ctx.fillText(`boundary near L* = ${crossing - 1}–${crossing}`, x(crossing) + 6, y(0.5) - 6);
  }
}

function stats(r) {
  const rows = [
    ["RMSE to even light", `${r.rmse_before.toFixed(3)} → ${r.rmse_after.toFixed(3)}`],
    ["EME", `${r.eme_before.toFixed(2)} → ${r.eme_after.toFixed(2)}`],
    ["LOM", r.lom.toFixed(3)],
    ["Under / over face pixels", `${r.under_pixels} / ${r.over_pixels}`],
    ["CG iterations", String(r.iterations)],
  ];
  $("stats").innerHTML = rows.map(([k, v]) => `<tr><td>${k}</td><td>${v}</td></tr>`).join("");
}

let demo = null;
let pending = null;

function schedule(rerender) {
  showValues();
  if (pending) {
    pending.rerender ||= rerender;
    return;
  }
  pending = { rerender };
  requestAnimationFrame(() => {
    const job = pending;
    pending = null;
    try {
      if (job.rerender || !demo) {
        demo?.free();
        demo = new Demo(SIZE, value("azimuth"), value("elevation"), value("ambient"));
        paint("original", demo.original_rgba());
        paint("reference", demo.reference_rgba());
        paint("normals", demo.normals_rgba());
      }
      const r = demo.enhance(value("lambda_g"), value("lambda_u"), value("alpha_t"));
      paint("enhanced", r.enhanced_rgba());
      paint("shading", r.shading_rgba());
      paint("masks", r.masks_rgba());
      stats(r);
      r.free();
      drawCurve(value("alpha_t"));
      $("status").textContent = "";
    } catch (e) {
      $("status").textContent = String(e.message ?? e);
    }
  });
}

await init();
for (const id of ["azimuth", "elevation", "ambient"]) {
  $(id).addEventListener("input", () => schedule(true));
}
for (const id of ["lambda_g", "lambda_u", "alpha_t"]) {
  $(id).addEventListener("input", () => schedule(false));
}
window.addEventListener("resize", () => drawCurve(value("alpha_t")));
schedule(true);
