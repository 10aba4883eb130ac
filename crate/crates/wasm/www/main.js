import init, { Demo } from "./pkg/scoreforge_wasm.js";

const $ = (id) => document.getElementById(id);

function bindOutputs() {
  for (const input of document.querySelectorAll("input[type=range]")) {
    const out = input.parentElement.querySelector("output");
    const show = () => { out.textContent = input.value; };
    input.addEventListener("input", show);
    show();
  }
}

function paint(canvas, rgba, w, h) {
  if (rgba.length === 0) return;
  canvas.width = w;
  canvas.height = h;
  canvas.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(rgba), w, h), 0, 0);
}

// rerun `fn` after input settles so dragging a slider stays responsive
function debounced(fn, ms = 60) {
  let t;
  return () => { clearTimeout(t); t = setTimeout(fn, ms); };
}

function heat(v) {
  // white to dark green
  const g = Math.round(255 - 155 * v), rb = Math.round(255 - 235 * v);
  return `rgb(${rb},${g},${rb})`;
}

function drawSweep(canvas, grid, confs, ious) {
  const ctx = canvas.getContext("2d");
  const left = 60, top = 20, cell = 42;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.font = "11px sans-serif";
  let best = 0;
  grid.forEach((v, i) => { if (v > grid[best]) best = i; });
  grid.forEach((v, i) => {
    const r = Math.floor(i / ious.length), c = i % ious.length;
    const x = left + c * cell, y = top + r * cell;
    ctx.fillStyle = heat(v);
    ctx.fillRect(x, y, cell - 1, cell - 1);
    ctx.fillStyle = v > 0.6 ? "#fff" : "#222";
    ctx.fillText(v.toFixed(2), x + 8, y + 25);
    if (i === best) {
      ctx.strokeStyle = "#d00";
      ctx.lineWidth = 2;
      ctx.strokeRect(x + 1, y + 1, cell - 3, cell - 3);
    }
  });
  ctx.fillStyle = "#222";
  confs.forEach((c, r) => ctx.fillText(c.toFixed(2), 20, top + r * cell + 25));
  ious.forEach((u, c) => ctx.fillText(u.toFixed(2), left + c * cell + 8, top + confs.length * cell + 14));
  ctx.fillText("conf", 18, 12);
  ctx.fillText("IoU", left + ious.length * cell + 4, top + confs.length * cell + 14);
  return best;
}

async function main() {
  await init();
  const demo = new Demo(4, 600, 450, 7n);
  const w = demo.width(), h = demo.height();
  $("bin-page").max = demo.page_count() - 1;
  bindOutputs();

  const binarize = () => {
    const page = +$("bin-page").value;
    paint($("bin-source"), demo.page_rgba(page), w, h);
    paint($("bin-mask"), demo.binarize(page, +$("bin-window").value, +$("bin-k").value, +$("bin-r").value), w, h);
  };
  const synthesize = () => {
    try {
      paint($("syn"), demo.synthesize(BigInt($("syn-seed").value), +$("syn-rot").value), w, h);
      $("syn-info").textContent =
        `angle ${demo.synthetic_angle().toFixed(2)}°, ${demo.synthetic_region_count()} regions`;
    } catch (e) {
      $("syn-info").textContent = String(e);
    }
  };
  const confs = Array.from(Demo.conf_thresholds()), ious = Array.from(Demo.iou_thresholds());
  const sweep = () => {
    const grid = Array.from(demo.sweep_grid(+$("sw-jitter").value, 0n));
    const best = drawSweep($("sw"), grid, confs, ious);
    const r = Math.floor(best / ious.length), c = best % ious.length;
    $("sw-info").textContent = `best mF1 ${grid[best].toFixed(3)} at conf ${confs[r].toFixed(2)}, IoU ${ious[c].toFixed(2)}`;
  };

  for (const id of ["bin-page", "bin-window", "bin-k", "bin-r"]) $(id).addEventListener("input", debounced(binarize));
  for (const id of ["syn-seed", "syn-rot"]) $(id).addEventListener("input", debounced(synthesize, 150));
  $("sw-jitter").addEventListener("input", debounced(sweep));

  binarize();
  synthesize();
  sweep();
  $("status").textContent = "";
}

main().catch((e) => { $("status").textContent = `failed to start: ${e}`; });
