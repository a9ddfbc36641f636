import init, { Session } from "./pkg/rsvp_demo.js";

const $ = (id) => document.getElementById(id);
let session = null;
let erp = null;

function status(text, isError = false) {
  $("status").textContent = text;
  $("status").className = isError ? "err" : "";
}

function guarded(fn) {
  return () => {
    try {
      fn();
    } catch (e) {
      status(String(e), true);
    }
  };
}

function drawErp() {
  const c = $("erp");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  if (!erp) return;
  const row = erp.diff[erp.channels.indexOf($("channel").value)];
  const vmax = Math.max(...row.map(Math.abs)) || 1;
  const x = (i) => 40 + (i / (row.length - 1)) * (c.width - 50);
  const y = (v) => c.height / 2 - (v / vmax) * (c.height / 2 - 15);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(40, y(0));
  ctx.lineTo(c.width - 10, y(0));
  ctx.stroke();
  ctx.strokeStyle = "#b2182b";
  ctx.beginPath();
  row.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
  ctx.stroke();
  ctx.fillStyle = "#222";
  ctx.fillText(`target − standard, ±${vmax.toFixed(2)} µV`, 45, 12);
  ctx.fillText(`${erp.times[0]} s`, 40, c.height - 3);
  ctx.fillText(`${erp.times[erp.times.length - 1].toFixed(3)} s`, c.width - 50, c.height - 3);
}

function generate() {
  status("Generating…");
  session?.free();
  session = new Session(Number($("seed").value), Number($("noise").value));
  erp = JSON.parse(session.erp());
  const keep = $("channel").value || "Pz";
  $("channel").innerHTML = erp.channels.map((n) => `<option>${n}</option>`).join("");
  $("channel").value = erp.channels.includes(keep) ? keep : erp.channels[0];
  drawErp();
  const s = JSON.parse(session.summary());
  status(`${s.epochs} epochs (${s.targets} targets); ${s.train} train, ${s.test} test`);
}

function maps() {
  if (!session) return;
  const method = $("method").value;
  const nf = Number($("nf").value);
  const out = [];
  for (let k = 0; k < nf; k++) out.push(session.topomap(method, nf, k));
  $("maps").innerHTML = out.join("");
}

function roc() {
  if (!session) return;
  const r = JSON.parse(session.roc($("pipeline").value, Number($("roc-nf").value), Number($("reg").value)));
  const c = $("roc");
  const ctx = c.getContext("2d");
  const px = (v) => 20 + v * (c.width - 30);
  const py = (v) => c.height - 20 - v * (c.height - 30);
  ctx.clearRect(0, 0, c.width, c.height);
  ctx.strokeStyle = "#bbb";
  ctx.strokeRect(px(0), py(1), px(1) - px(0), py(0) - py(1));
  ctx.beginPath();
  ctx.moveTo(px(0), py(0));
  ctx.lineTo(px(1), py(1));
  ctx.stroke();
  ctx.strokeStyle = "#2166ac";
  ctx.beginPath();
  r.fpr.forEach((f, i) => (i ? ctx.lineTo(px(f), py(r.tpr[i])) : ctx.moveTo(px(f), py(r.tpr[i]))));
  ctx.stroke();
  $("auc").textContent = `${r.pipeline}: AUC ${r.auc.toFixed(3)}`;
}

await init();
const filters = ["MTWLB", "xDAWN", "CSP", "NONE"];
const classifiers = ["LDA", "BLR", "LR"];
$("pipeline").innerHTML = filters
  .flatMap((f) => classifiers.map((c) => `<option>${f}+${c}</option>`))
  .join("");
$("make").onclick = guarded(generate);
$("channel").onchange = drawErp;
$("maps-btn").onclick = guarded(maps);
$("roc-btn").onclick = guarded(roc);
guarded(generate)();
