/** DOM wiring for the console page. */

import { bandPath, fitScale, linePath, toX } from "./chart.js";
import { SessionHandle, connectAndRender } from "./client.js";
import { SessionView, isTerminal } from "./view.js";

const $ = (id: string) => document.getElementById(id) as HTMLElement;

let handle: SessionHandle | null = null;

function render(view: SessionView): void {
  const scale = fitScale(view.points);
  const svg = $("chart");
  const band = bandPath(view.points, scale);
  const bsf = linePath(view.points, scale, (p) => p.bsf);
  const point = linePath(view.points, scale, (p) => p.point);
  const tau = view.tauLeaves !== null && view.tauLeaves <= scale.xMax
    ? `<line x1="${toX(scale, view.tauLeaves)}" y1="0" x2="${toX(scale, view.tauLeaves)}" ` +
      `y2="${scale.height}" class="tau"/>`
    : "";
  svg.innerHTML =
    `<path class="band" d="${band}"/>` +
    `<path class="bsf" d="${bsf}"/>` +
    `<path class="point" d="${point}"/>` + tau;

  $("state").textContent = view.state;
  $("state").dataset.state = view.state;
  $("events").textContent = String(view.eventCount);
  $("warnings").textContent = String(view.warningCount);
  const gauge = view.gauge;
  $("gauge-value").textContent = gauge === null ? "–" : `${(gauge * 100).toFixed(1)}%`;
  ($("gauge-bar") as HTMLElement).style.width = `${(gauge ?? 0) * 100}%`;
  $("tau").textContent = view.tauLeaves === null ? "–" : `${view.tauLeaves} leaves`;
  $("class").textContent = view.currentClass === null
    ? "–"
    : `${view.currentClass}` + (view.pClass !== null
      ? ` (p=${(view.pClass * 100).toFixed(1)}%)` : "");
  const answer = view.answerIds
    .map((id, i) => `#${id} @ ${view.answerDistances[i]?.toFixed(4) ?? "…"}`)
    .join("  ");
  $("answer").textContent = answer || "–";
  ($("stop") as HTMLButtonElement).disabled = handle === null || isTerminal(view);
}

async function submit(): Promise<void> {
  const serviceUrl = ($("service") as HTMLInputElement).value.replace(/\/$/, "");
  const policy = ($("policy") as HTMLInputElement).value || "none";
  const indexField = ($("series-index") as HTMLInputElement).value;
  const valuesField = ($("series-values") as HTMLInputElement).value.trim();
  const payload = valuesField
    ? { series: valuesField.split(",").map(Number), policy }
    : { series_index: Number(indexField), policy };
  ($("submit") as HTMLButtonElement).disabled = true;
  try {
    handle = await connectAndRender(serviceUrl, payload, { onUpdate: render });
    render(handle.view());
    await handle.done;
    render(handle.view());
  } catch (err) {
    $("state").textContent = `error: ${String(err)}`;
  } finally {
    ($("submit") as HTMLButtonElement).disabled = false;
  }
}

function wire(): void {
  $("submit").addEventListener("click", () => void submit());
  $("stop").addEventListener("click", () => void handle?.stop());
}

if (typeof document !== "undefined") {
  wire();
}
