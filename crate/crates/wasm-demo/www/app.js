import init, {
  penalty_surface_values,
  penalty_point,
  synthetic_csv,
  relaxation_bound,
  diagonal_dominance_percent,
} from "./pkg/rank1_sparse_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const STEPS = 121;

// a short perceptual ramp, dark to light
const RAMP = [[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]];

function color(t) {
  const x = Math.min(Math.max(t, 0), 1) * (RAMP.length - 1);
  const i = Math.min(Math.floor(x), RAMP.length - 2);
  const f = x - i;
  return RAMP[i].map((c, k) => Math.round(c + f * (RAMP[i + 1][k] - c)));
}

function paint(canvas, values, offset, vmax) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(STEPS, STEPS);
  for (let i = 0; i < STEPS; i++) {
    for (let j = 0; j < STEPS; j++) {
      // β₁ runs left to right, β₂ bottom to top
      const v = values[2 * (i * STEPS + j) + offset];
      const [r, g, b] = color(vmax > 0 ? v / vmax : 0);
      const px = 4 * ((STEPS - 1 - j) * STEPS + i);
      img.data.set([r, g, b, 255], px);
    }
  }
  ctx.putImageData(img, 0, 0);
}

function params() {
  return { d1: num("d1"), d2: num("d2"), kappa: num("kappa"), extent: num("extent") };
}

function drawSurfaces() {
  const { d1, d2, kappa, extent } = params();
  $("d1v").textContent = d1.toFixed(2);
  $("d2v").textContent = d2.toFixed(2);
  $("kappav").textContent = kappa.toFixed(2);
  try {
    const v = penalty_surface_values(d1, d2, kappa, extent, STEPS);
    let vmax = 0;
    for (const x of v) vmax = Math.max(vmax, x);
    paint($("mc"), v, 0, vmax);
    paint($("r1"), v, 1, vmax);
    $("readout").textContent = `shared colour scale: 0 … ${vmax.toFixed(3)}`;
  } catch (e) {
    $("readout").innerHTML = `<span class="error">${e.message}</span>`;
  }
}

function hover(ev) {
  const { d1, d2, kappa, extent } = params();
  const rect = ev.target.getBoundingClientRect();
  const b1 = -extent + (2 * extent * (ev.clientX - rect.left)) / rect.width;
  const b2 = extent - (2 * extent * (ev.clientY - rect.top)) / rect.height;
  const r = JSON.parse(penalty_point(b1, b2, d1, d2, kappa));
  $("readout").textContent =
    `β = (${b1.toFixed(3)}, ${b2.toFixed(3)})   βᵀQβ = ${r.quad.toFixed(4)}\n` +
    `ρ MC+ = ${r.rho_mc_plus.toFixed(4)}   ρ R1 = ${r.rho_r1.toFixed(4)}   (${r.branch})`;
}

function generate() {
  try {
    $("csv").value = synthetic_csv(num("n"), num("p"), num("s"), num("rho"), num("snr"), num("seed"));
    $("result").textContent = "";
  } catch (e) {
    showError(e);
  }
}

function showError(e) {
  $("result").innerHTML = `<span class="error">${e.message ?? e}</span>`;
}

function solve() {
  $("result").textContent = "solving…";
  // let the message paint before the solver blocks the thread
  setTimeout(() => {
    try {
      const t0 = performance.now();
      const r = JSON.parse(relaxation_bound($("csv").value, $("kind").value, num("lambda"), num("mu"), num("k")));
      const ms = performance.now() - t0;
      const c = r.certificate;
      const lines = [
        `${c.relaxation}: n = ${r.n}, p = ${r.p}, k = ${c.k}, ${r.iterations} iterations, ${ms.toFixed(0)} ms`,
        `lower bound   ${c.nu_lb.toFixed(6)}`,
        `rounded value ${c.nu_ub.toFixed(6)}   gap ${c.gap_percent === null ? "undefined" : c.gap_percent.toFixed(4) + " %"}`,
      ];
      if (r.optimum) {
        lines.push(`exact optimum ${r.optimum.nu.toFixed(6)}   support {${r.optimum.support.map((i) => r.columns[i]).join(", ")}}`);
      }
      lines.push(`rounded support {${c.support.map((i) => r.columns[i]).join(", ")}}`, "", "relaxed indicators z:");
      $("result").textContent = lines.join("\n") + "\n";
      r.z.forEach((z, i) => {
        const row = document.createElement("div");
        row.innerHTML = `${r.columns[i].padEnd(6)} <span class="bar" style="width:${(200 * Math.min(Math.max(z, 0), 1)).toFixed(0)}px"></span> ${z.toFixed(3)}`;
        $("result").appendChild(row);
      });
    } catch (e) {
      showError(e);
    }
  }, 10);
}

function dominance() {
  try {
    const pct = diagonal_dominance_percent($("csv").value, num("lambda"));
    $("result").textContent = `diagonal dominance of XᵀX + λI: ${pct.toFixed(2)} %`;
  } catch (e) {
    showError(e);
  }
}

await init();
for (const id of ["d1", "d2", "kappa", "extent"]) $(id).addEventListener("input", drawSurfaces);
for (const id of ["mc", "r1"]) $(id).addEventListener("mousemove", hover);
$("gen").addEventListener("click", generate);
$("solve").addEventListener("click", solve);
$("dd").addEventListener("click", dominance);
drawSurfaces();
generate();
