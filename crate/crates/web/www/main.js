import init, { Demo, kl_curve, patch_size } from "./pkg/voxelnet_web.js";

const CLASSES = ["AD", "MCI", "HC"];
const $ = (id) => document.getElementById(id);

function grayCanvas(pixels, w, h, scale, title) {
  const c = document.createElement("canvas");
  c.width = w;
  c.height = h;
  c.style.width = `${w * scale}px`;
  c.style.height = `${h * scale}px`;
  if (title) c.title = title;
  const img = c.getContext("2d").createImageData(w, h);
  for (let i = 0; i < pixels.length; i++) {
    img.data.set([pixels[i], pixels[i], pixels[i], 255], 4 * i);
  }
  c.getContext("2d").putImageData(img, 0, 0);
  return c;
}

let demo;
let picked = 0;

function drawScans() {
  const slice = +$("slice").value;
  $("slice-out").textContent = slice;
  const box = $("scans");
  box.replaceChildren();
  CLASSES.forEach((name, k) => {
    box.append(grayCanvas(demo.scan_slice(k, slice), demo.width(), demo.height(), 8, name));
  });
  drawFeatures();
}

function drawFeatures() {
  const box = $("features");
  box.replaceChildren();
  if (demo.basis_count() === 0) return;
  const p = patch_size();
  const slice = +$("slice").value;
  CLASSES.forEach((name, k) => {
    const px = demo.feature_slice(k, picked, slice);
    box.append(grayCanvas(px, demo.width() - p + 1, demo.height() - p + 1, 8, `${name}, filter ${picked}`));
  });
}

function drawBases() {
  const p = patch_size();
  const box = $("bases");
  box.replaceChildren();
  for (let i = 0; i < demo.basis_count(); i++) {
    const c = grayCanvas(demo.basis_image(i), p, p, 6, `filter ${i}`);
    if (i === picked) c.classList.add("picked");
    c.onclick = () => {
      picked = i;
      drawBases();
      drawFeatures();
    };
    box.append(c);
  }
}

function drawKl() {
  const s = +$("target").value;
  const c = $("kl");
  const g = c.getContext("2d");
  const n = c.width - 40;
  const curve = kl_curve(s, n);
  const top = Math.min(Math.max(...curve), 3);
  const y = (v) => c.height - 20 - (Math.min(v, top) / top) * (c.height - 30);
  g.clearRect(0, 0, c.width, c.height);
  g.strokeStyle = "#999";
  g.strokeRect(20, 10, n, c.height - 30);
  g.fillStyle = "#666";
  g.fillText("0", 16, c.height - 6);
  g.fillText("1", 20 + n - 4, c.height - 6);
  g.fillText(`s = ${s}`, 24 + n * s, 22);
  g.beginPath();
  g.strokeStyle = "#1565c0";
  curve.forEach((v, i) => (i ? g.lineTo(20 + i, y(v)) : g.moveTo(20 + i, y(v))));
  g.stroke();
  g.fillStyle = "#d33";
  for (const a of demo.mean_activations()) {
    g.fillRect(20 + a * n - 1, c.height - 24, 3, 6);
  }
}

function rebuild() {
  $("noise-out").textContent = $("noise").value;
  if (demo) demo.free();
  demo = new Demo(7, +$("noise").value);
  $("train-out").textContent = "Not trained yet. Click a basis to see its feature maps above.";
  $("bases").replaceChildren();
  drawScans();
  drawKl();
}

function train() {
  const t0 = performance.now();
  const target = +$("target").value;
  const beta = +$("beta").value;
  try {
    const dev = demo.train(+$("hidden").value, target, beta, +$("epochs").value);
    const ms = Math.round(performance.now() - t0);
    $("train-out").textContent = `mean |s_hat - s| = ${dev.toFixed(4)} (${ms} ms)`;
  } catch (e) {
    $("train-out").textContent = `error: ${e}`;
    return;
  }
  picked = Math.min(picked, demo.basis_count() - 1);
  drawBases();
  drawFeatures();
  drawKl();
}

await init();
$("slice").max = 19;
$("slice").oninput = drawScans;
$("noise").onchange = rebuild;
$("target").oninput = () => {
  $("target-out").textContent = $("target").value;
  drawKl();
};
$("beta").oninput = () => ($("beta-out").textContent = $("beta").value);
$("train").onclick = train;
rebuild();
