import type {
  InspectionEvent,
  InspectionResult,
  OrientationName,
  WireVerdictName,
} from "./types.js";

// Verdict outline colors: Match green, Mismatch red, Unclear amber.
export const VERDICT_COLORS: Record<WireVerdictName, string> = {
  Match: "#2f9e44",
  Mismatch: "#e03131",
  Unclear: "#f08c00",
};

export const UNCLEAR_BANNER_TEXT = "Image not clear";

export type OverlayBox = {
  wireIndex: number;
  verdict: WireVerdictName;
  color: string;
  left: number;
  top: number;
  width: number;
  height: number;
};

export type OverlayBanner = {
  kind: "pass" | "fail" | "unclear";
  text: string;
};

export type OverlayModel = {
  boxes: OverlayBox[];
  banner: OverlayBanner;
  orientation: OrientationName | null;
  needsResolve: boolean;
};

export type OverlayGeometry = {
  // Display-pixel size of one source pixel, plus where the inspected
  // region's origin lands in the displayed image.
  scaleX?: number;
  scaleY?: number;
  offsetX?: number;
  offsetY?: number;
};

/** Project one view of a result onto display coordinates.
 *
 * Boxes use the service's half-open x interval and inclusive y interval, so
 * width is `x_right - x_left` and height spans `y_bottom - y_top + 1` rows.
 * The model carries one box per wire reported by the service; an
 * unsegmented view yields no boxes and the result-level banner explains why.
 */
export function buildOverlayModel(
  result: InspectionResult,
  viewIndex = 0,
  geometry: OverlayGeometry = {},
): OverlayModel {
  const view = result.views[viewIndex];
  if (view === undefined) {
    throw new RangeError(`result has no view ${viewIndex}`);
  }
  const sx = geometry.scaleX ?? 1;
  const sy = geometry.scaleY ?? 1;
  const ox = geometry.offsetX ?? 0;
  const oy = geometry.offsetY ?? 0;

  const boxes = view.wires.map((w) => ({
    wireIndex: w.index,
    verdict: w.verdict,
    color: VERDICT_COLORS[w.verdict],
    left: ox + w.box.x_left * sx,
    top: oy + w.box.y_top * sy,
    width: (w.box.x_right - w.box.x_left) * sx,
    height: (w.box.y_bottom - w.box.y_top + 1) * sy,
  }));

  let banner: OverlayBanner;
  if (result.overall === "Unclear") {
    banner = { kind: "unclear", text: UNCLEAR_BANNER_TEXT };
  } else if (result.overall === "Fail") {
    banner = { kind: "fail", text: result.message };
  } else {
    banner = { kind: "pass", text: result.message };
  }

  return {
    boxes,
    banner,
    orientation: view.orientation,
    needsResolve: result.overall === "Unclear",
  };
}

/** Resolve buttons appear only on unresolved Unclear events. */
export function eventNeedsResolve(event: InspectionEvent): boolean {
  return event.result.overall === "Unclear" && event.operator_action === "none";
}
