// Payload shapes of the inspection service REST API. The console renders
// these verbatim; it never computes a verdict on its own.

export type OverallVerdict = "Pass" | "Fail" | "Unclear";
export type WireVerdictName = "Match" | "Mismatch" | "Unclear";
export type OrientationName = "Correct" | "Reversed" | "Unclear";
export type OperatorAction = "none" | "manual_pass" | "manual_fail";

export type WireBox = {
  x_left: number;
  x_right: number;
  y_top: number;
  y_bottom: number;
};

export type WireResult = {
  index: number;
  verdict: WireVerdictName;
  mse_rgb: number;
  mse_hsv: number;
  box: WireBox;
};

export type ViewResult = {
  view_id: string;
  segmented: boolean;
  segmentation_reason: string | null;
  orientation: OrientationName | null;
  wires: WireResult[];
};

export type InspectionResult = {
  overall: OverallVerdict;
  message: string;
  views: ViewResult[];
};

export type SessionCounts = {
  pass: number;
  fail: number;
  unclear: number;
  manual_override: number;
};

export type InspectionEvent = {
  event_id: string;
  timestamp: string;
  frame_digests: string[];
  result: InspectionResult;
  operator_action: OperatorAction;
};

export type SessionRecord = {
  session_id: string;
  operator: string;
  harness_type: string;
  profile_id: string;
  started_at: string;
  ended_at: string | null;
  open: boolean;
  counts: SessionCounts;
  events?: InspectionEvent[];
};

export type ProfileSummary = {
  profile_id: string;
  harness_type: string;
  created_at: string;
  sample_count: number;
  views: string[];
};

export type InspectResponse = {
  event: InspectionEvent;
  result: InspectionResult;
  counts: SessionCounts;
};

export type ResolveResponse = {
  event: InspectionEvent;
  counts: SessionCounts;
};

export type RoiConfig = { x: number; y: number; width: number; height: number };

export type ViewConfig = {
  view_id: string;
  roi: RoiConfig;
  expected_wires: number;
};

export type TrainingConfig = {
  harness_type: string;
  views: ViewConfig[];
};
