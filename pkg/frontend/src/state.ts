/**
 * Explorer state and its serialization into explain requests.
 *
 * Every reachable state must serialize to a request the service accepts;
 * the slider/selection bounds here are therefore intersections of the UI's
 * ranges with the server's validation rules, and `validateRequest` mirrors
 * those rules for tests.
 */

export type Method = "grad" | "layer" | "score";
export type Aggregation = "avg_before_act" | "max_before_act" | "avg_after_act";

export const METHODS: Method[] = ["grad", "layer", "score"];
export const AGGREGATIONS: Aggregation[] = ["avg_before_act", "max_before_act", "avg_after_act"];

/** UI slider covers [0, 2]: baseline through extrapolated comparison. */
export const GAMMA_SLIDER_MAX = 2;
/** Server-side bound on comparison strength. */
export const GAMMA_REQUEST_MAX = 4;
export const DEFAULT_GAMMA = 0.6;
export const DEFAULT_AUTO_COUNT = 3;

export interface ExplorerState {
  sampleId: string | null;
  /** null = let the server use its argmax prediction */
  targetClass: number | null;
  referenceMode: "auto" | "manual";
  autoCount: number;
  manualRefs: number[];
  gamma: number;
  method: Method;
  aggregation: Aggregation;
  overlayOpacity: number;
  /** swap target and (single manual) reference: "what here looks like d?" */
  reverse: boolean;
  numClasses: number;
}

export interface ExplainRequest {
  sample_id: string;
  target_class: number | null;
  references: number[] | string | null;
  gamma: number;
  method: Method;
  aggregation: Aggregation;
  output: "raw" | "normalized" | "overlay_png";
}

export function defaultState(numClasses: number): ExplorerState {
  return {
    sampleId: null,
    targetClass: null,
    referenceMode: "auto",
    autoCount: DEFAULT_AUTO_COUNT,
    manualRefs: [],
    gamma: DEFAULT_GAMMA,
    method: "grad",
    aggregation: "avg_before_act",
    overlayOpacity: 0.5,
    reverse: false,
    numClasses,
  };
}

export function canReverse(state: ExplorerState): boolean {
  return (
    state.referenceMode === "manual" &&
    state.manualRefs.length === 1 &&
    state.targetClass !== null &&
    state.manualRefs[0] !== state.targetClass
  );
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(Math.max(v, lo), hi);
}

/**
 * Serialize the state into a request the server accepts, or null when no
 * sample is selected yet. Out-of-range UI values are clamped, manual
 * references are de-duplicated and filtered against the target.
 */
export function toExplainRequest(state: ExplorerState): ExplainRequest | null {
  if (state.sampleId === null) return null;
  let target = state.targetClass;
  if (target !== null && (target < 0 || target >= state.numClasses)) target = null;

  let refs = state.manualRefs.filter(
    (d, i) => Number.isInteger(d) && d >= 0 && d < state.numClasses && d !== target
      && state.manualRefs.indexOf(d) === i,
  );
  if (state.reverse && canReverse(state) && target !== null) {
    const swapped = state.manualRefs[0]!;
    refs = [target];
    target = swapped;
  }

  let references: number[] | string | null;
  if (state.referenceMode === "manual") {
    references = refs.length > 0 ? refs : null;
  } else {
    const maxAuto = Math.max(1, state.numClasses - 1);
    references = `auto:${clamp(Math.round(state.autoCount), 1, maxAuto)}`;
  }
  return {
    sample_id: state.sampleId,
    target_class: target,
    references,
    gamma: clamp(state.gamma, 0, GAMMA_SLIDER_MAX),
    method: state.method,
    aggregation: state.aggregation,
    output: "normalized",
  };
}

/**
 * Mirror of the server's request validation; returns an error message or
 * null. Kept in sync with the documented HTTP API.
 */
export function validateRequest(req: ExplainRequest, numClasses: number): string | null {
  if (!req.sample_id) return "sample_id required";
  if (req.target_class !== null) {
    if (!Number.isInteger(req.target_class) || req.target_class < 0 || req.target_class >= numClasses) {
      return `target class ${req.target_class} out of range`;
    }
  }
  if (!(req.gamma >= 0 && req.gamma <= GAMMA_REQUEST_MAX)) return `gamma ${req.gamma} out of [0, 4]`;
  if (!METHODS.includes(req.method)) return `unknown method ${req.method}`;
  if (!AGGREGATIONS.includes(req.aggregation)) return `unknown aggregation ${req.aggregation}`;
  if (typeof req.references === "string") {
    const m = /^auto:(\d+)$/.exec(req.references);
    if (!m) return `bad reference spec ${req.references}`;
    const count = Number(m[1]);
    if (count < 1 || count > numClasses - 1) return `auto count ${count} out of range`;
  } else if (req.references !== null) {
    for (const d of req.references) {
      if (!Number.isInteger(d) || d < 0 || d >= numClasses) return `reference ${d} out of range`;
      if (req.target_class !== null && d === req.target_class) return "reference equals target";
    }
  }
  return null;
}
