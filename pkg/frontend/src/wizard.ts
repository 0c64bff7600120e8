import type { NamedBlob } from "./api.js";
import type { TrainingConfig, ViewConfig } from "./types.js";

// Mirrors the service-side training rule; the submit button stays disabled
// until every view carries at least this many samples.
export const MIN_TRAINING_SAMPLES = 5;

export type ViewDraft = {
  config: ViewConfig;
  samples: NamedBlob[];
};

export type TrainingDraft = {
  harnessType: string;
  views: ViewDraft[];
};

export type SubmitGate = { ok: true } | { ok: false; reason: string };

export function canSubmitTraining(draft: TrainingDraft): SubmitGate {
  if (draft.harnessType.trim() === "") {
    return { ok: false, reason: "harness type is required" };
  }
  if (draft.views.length === 0) {
    return { ok: false, reason: "add at least one view" };
  }
  for (const view of draft.views) {
    if (view.samples.length < MIN_TRAINING_SAMPLES) {
      return {
        ok: false,
        reason:
          `view '${view.config.view_id}' has ${view.samples.length} of the ` +
          `minimum of five correct samples`,
      };
    }
  }
  return { ok: true };
}

export function buildTrainingConfig(draft: TrainingDraft): TrainingConfig {
  return {
    harness_type: draft.harnessType,
    views: draft.views.map((v) => v.config),
  };
}

/** Flatten view uploads into one file list, routed by '<view_id>__' prefixes. */
export function buildTrainingFiles(draft: TrainingDraft): NamedBlob[] {
  const files: NamedBlob[] = [];
  for (const view of draft.views) {
    for (const sample of view.samples) {
      files.push({
        name: `${view.config.view_id}__${sample.name}`,
        blob: sample.blob,
      });
    }
  }
  return files;
}
