import { ApiClient, ApiError, NamedBlob } from "./api.js";
import { buildOverlayModel, eventNeedsResolve, OverlayModel } from "./overlay.js";
import {
  buildTrainingConfig,
  buildTrainingFiles,
  canSubmitTraining,
  TrainingDraft,
} from "./wizard.js";
import type { ProfileSummary, SessionCounts, SessionRecord } from "./types.js";

type AppState = {
  client: ApiClient | null;
  profiles: ProfileSummary[];
  session: SessionRecord | null;
  inspectInFlight: boolean;
  lastFrameUrl: string | null;
};

const state: AppState = {
  client: null,
  profiles: [],
  session: null,
  inspectInFlight: false,
  lastFrameUrl: null,
};

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el;
}

function input(id: string): HTMLInputElement {
  return $(id) as HTMLInputElement;
}

function showError(zoneId: string, err: unknown): void {
  const zone = $(zoneId);
  zone.textContent = err instanceof ApiError ? err.detail : String(err);
  zone.classList.remove("hidden");
}

function clearError(zoneId: string): void {
  const zone = $(zoneId);
  zone.textContent = "";
  zone.classList.add("hidden");
}

function requireClient(): ApiClient {
  if (state.client === null) throw new Error("connect to the service first");
  return state.client;
}

// -- connection ---------------------------------------------------------------

async function connect(): Promise<void> {
  clearError("connect-error");
  const client = new ApiClient(input("server-url").value, input("token").value);
  try {
    state.profiles = await client.listProfiles();
    state.client = client;
    renderProfiles();
    $("connected-as").textContent = `connected to ${input("server-url").value}`;
  } catch (err) {
    showError("connect-error", err);
  }
}

function renderProfiles(): void {
  const select = $("profile-select") as HTMLSelectElement;
  select.innerHTML = "";
  for (const p of state.profiles) {
    const opt = document.createElement("option");
    opt.value = p.profile_id;
    opt.textContent = `${p.harness_type} (${p.views.length} view, ${p.sample_count} samples)`;
    select.appendChild(opt);
  }
  const list = $("profile-list");
  list.innerHTML = "";
  for (const p of state.profiles) {
    const li = document.createElement("li");
    li.textContent = `${p.harness_type} — ${p.profile_id} — trained ${p.created_at}`;
    list.appendChild(li);
  }
}

// -- train wizard -------------------------------------------------------------

function readTrainingDraft(): TrainingDraft {
  const files = (input("train-files").files ?? []) as FileList | NamedBlob[];
  const samples: NamedBlob[] = [];
  for (const f of Array.from(files as FileList)) {
    samples.push({ name: f.name, blob: f });
  }
  return {
    harnessType: input("train-harness-type").value,
    views: [
      {
        config: {
          view_id: input("train-view-id").value || "front",
          roi: {
            x: Number(input("train-roi-x").value),
            y: Number(input("train-roi-y").value),
            width: Number(input("train-roi-w").value),
            height: Number(input("train-roi-h").value),
          },
          expected_wires: Number(input("train-wires").value),
        },
        samples,
      },
    ],
  };
}

function refreshTrainGate(): void {
  const gate = canSubmitTraining(readTrainingDraft());
  const button = $("train-submit") as HTMLButtonElement;
  button.disabled = !gate.ok;
  $("train-gate").textContent = gate.ok ? "" : gate.reason;
}

async function submitTraining(): Promise<void> {
  clearError("train-error");
  const draft = readTrainingDraft();
  const gate = canSubmitTraining(draft);
  if (!gate.ok) {
    $("train-gate").textContent = gate.reason;
    return;
  }
  try {
    const created = await requireClient().trainProfile(
      buildTrainingConfig(draft),
      buildTrainingFiles(draft),
    );
    $("train-status").textContent = `trained profile ${created.profile_id}`;
    state.profiles = await requireClient().listProfiles();
    renderProfiles();
  } catch (err) {
    showError("train-error", err); // 422 text from the service, verbatim
  }
}

// -- session ------------------------------------------------------------------

function renderCounts(counts: SessionCounts): void {
  $("count-pass").textContent = String(counts.pass);
  $("count-fail").textContent = String(counts.fail);
  $("count-unclear").textContent = String(counts.unclear);
  $("count-override").textContent = String(counts.manual_override);
}

function renderSessionControls(): void {
  const open = state.session !== null && state.session.open;
  (input("inspect-frames") as HTMLInputElement).disabled = !open;
  ($("inspect-submit") as HTMLButtonElement).disabled = !open || state.inspectInFlight;
  ($("session-close") as HTMLButtonElement).disabled = !open;
  $("session-title").textContent = state.session
    ? `${state.session.session_id} (${state.session.open ? "open" : "closed"})`
    : "no session";
}

async function startSession(): Promise<void> {
  clearError("session-error");
  const select = $("profile-select") as HTMLSelectElement;
  const profile = state.profiles.find((p) => p.profile_id === select.value);
  if (profile === undefined) {
    showError("session-error", "train or pick a profile first");
    return;
  }
  try {
    state.session = await requireClient().createSession(
      input("operator").value || "operator",
      profile.harness_type,
      profile.profile_id,
    );
    renderCounts(state.session.counts);
    renderSessionControls();
    await refreshHistory();
  } catch (err) {
    showError("session-error", err);
  }
}

async function closeSession(): Promise<void> {
  if (state.session === null) return;
  try {
    state.session = await requireClient().closeSession(state.session.session_id);
    renderSessionControls();
  } catch (err) {
    showError("session-error", err);
  }
}

// -- inspect + overlay ----------------------------------------------------------

function renderOverlay(model: OverlayModel): void {
  const banner = $("verdict-banner");
  banner.textContent = model.banner.text;
  banner.className = `banner ${model.banner.kind}`;

  $("orientation-badge").textContent = model.orientation
    ? `connector: ${model.orientation}`
    : "";

  const layer = $("overlay-layer");
  layer.innerHTML = "";
  for (const box of model.boxes) {
    const div = document.createElement("div");
    div.className = "wire-box";
    div.style.left = `${box.left}px`;
    div.style.top = `${box.top}px`;
    div.style.width = `${box.width}px`;
    div.style.height = `${box.height}px`;
    div.style.borderColor = box.color;
    div.title = `wire ${box.wireIndex}: ${box.verdict}`;
    layer.appendChild(div);
  }
}

async function submitInspection(): Promise<void> {
  if (state.session === null || state.inspectInFlight) return;
  clearError("inspect-error");
  const files = input("inspect-frames").files;
  if (files === null || files.length === 0) {
    showError("inspect-error", "choose one frame per view");
    return;
  }
  const frames: NamedBlob[] = Array.from(files).map((f) => ({ name: f.name, blob: f }));

  // One inspection in flight per session; the button unlocks on response.
  state.inspectInFlight = true;
  renderSessionControls();
  try {
    const response = await requireClient().inspect(state.session.session_id, frames);
    if (state.lastFrameUrl !== null) URL.revokeObjectURL(state.lastFrameUrl);
    state.lastFrameUrl = URL.createObjectURL(frames[0].blob);
    const img = $("frame-image") as HTMLImageElement;
    img.src = state.lastFrameUrl;
    img.onload = () => {
      const geometry = {
        scaleX: img.clientWidth / Math.max(img.naturalWidth, 1),
        scaleY: img.clientHeight / Math.max(img.naturalHeight, 1),
        offsetX: Number(input("region-x").value || "0"),
        offsetY: Number(input("region-y").value || "0"),
      };
      renderOverlay(buildOverlayModel(response.result, 0, geometry));
    };
    renderCounts(response.counts);
    await refreshHistory();
  } catch (err) {
    showError("inspect-error", err);
  } finally {
    state.inspectInFlight = false;
    renderSessionControls();
  }
}

// -- history + resolve ----------------------------------------------------------

async function refreshHistory(): Promise<void> {
  if (state.session === null) return;
  state.session = await requireClient().getSession(state.session.session_id);
  renderCounts(state.session.counts);
  const list = $("event-list");
  list.innerHTML = "";
  for (const event of state.session.events ?? []) {
    const li = document.createElement("li");
    const overall = event.result.overall;
    li.textContent = `${event.event_id} ${event.timestamp} ${overall}`;
    if (event.operator_action !== "none") {
      li.textContent += ` (resolved: ${event.operator_action})`;
    }
    if (eventNeedsResolve(event)) {
      for (const action of ["manual_pass", "manual_fail"] as const) {
        const btn = document.createElement("button");
        btn.textContent = action;
        btn.onclick = () => void resolveEvent(event.event_id, action);
        li.appendChild(btn);
      }
    }
    list.appendChild(li);
  }
}

async function resolveEvent(
  eventId: string,
  action: "manual_pass" | "manual_fail",
): Promise<void> {
  if (state.session === null) return;
  clearError("inspect-error");
  try {
    const response = await requireClient().resolveEvent(
      state.session.session_id,
      eventId,
      action,
    );
    renderCounts(response.counts);
    await refreshHistory();
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      showError("inspect-error", "already resolved");
      await refreshHistory();
    } else {
      showError("inspect-error", err);
    }
  }
}

// -- wiring ---------------------------------------------------------------------

export function wireUp(): void {
  $("connect").onclick = () => void connect();
  $("train-submit").onclick = () => void submitTraining();
  $("session-start").onclick = () => void startSession();
  $("session-close").onclick = () => void closeSession();
  $("inspect-submit").onclick = () => void submitInspection();
  for (const id of [
    "train-files",
    "train-harness-type",
    "train-view-id",
    "train-wires",
  ]) {
    $(id).oninput = refreshTrainGate;
  }
  refreshTrainGate();
  renderSessionControls();
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  wireUp();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", wireUp);
}
