/** Five-stop certainty slider: 0 real .. 1 fake, nothing in between. */

export const STOPS = [0, 0.25, 0.5, 0.75, 1] as const;

export type StopValue = (typeof STOPS)[number];

export const STOP_LABELS: Record<StopValue, string> = {
  0: "real",
  0.25: "probably real",
  0.5: "unsure",
  0.75: "probably fake",
  1: "fake",
};

/** Least-bias starting position. */
export const NEUTRAL: StopValue = 0.5;

/** Nearest stop; exact midpoints resolve upward. Non-finite input (a drag
 * with no geometry) falls back to neutral so the control can never emit an
 * off-grid value. */
export function snapToStop(x: number): StopValue {
  if (!Number.isFinite(x)) return NEUTRAL;
  const clamped = Math.min(1, Math.max(0, x));
  return (Math.round(clamped * 4) / 4) as StopValue;
}

/** Pointer position along the track -> stop value. */
export function valueFromPointer(
  clientX: number,
  trackLeft: number,
  trackWidth: number,
): StopValue {
  if (!(trackWidth > 0)) return NEUTRAL;
  return snapToStop((clientX - trackLeft) / trackWidth);
}

/** One keyboard step left (-1) or right (+1), clamped to the ends. */
export function stepStop(value: StopValue, direction: -1 | 1): StopValue {
  const idx = STOPS.indexOf(value);
  const next = Math.min(STOPS.length - 1, Math.max(0, idx + direction));
  return STOPS[next] as StopValue;
}

export interface SliderHandle {
  readonly element: HTMLElement;
  value(): StopValue;
  set(value: StopValue): void;
  reset(): void;
}

/** Build the control. A native range input (0..4, step 1) carries focus and
 * arrow-key handling; positions map to stops by index, so the DOM can only
 * ever hold one of the five values. */
export function createSlider(
  doc: Document,
  onChange?: (value: StopValue) => void,
): SliderHandle {
  const wrap = doc.createElement("div");
  wrap.className = "certainty-slider";

  const input = doc.createElement("input");
  input.type = "range";
  input.min = "0";
  input.max = "4";
  input.step = "1";
  input.value = String(STOPS.indexOf(NEUTRAL));
  input.setAttribute("aria-label", "certainty that the image is fake");

  const label = doc.createElement("output");
  const ticks = doc.createElement("div");
  ticks.className = "slider-ticks";
  for (const stop of STOPS) {
    const tick = doc.createElement("span");
    tick.textContent = STOP_LABELS[stop];
    ticks.appendChild(tick);
  }

  const current = (): StopValue => STOPS[Number(input.value)] ?? NEUTRAL;
  const render = () => {
    const v = current();
    label.textContent = STOP_LABELS[v];
    input.setAttribute("aria-valuetext", STOP_LABELS[v]);
  };
  input.addEventListener("input", () => {
    render();
    onChange?.(current());
  });
  render();

  wrap.append(input, ticks, label);
  return {
    element: wrap,
    value: current,
    set(value: StopValue) {
      input.value = String(STOPS.indexOf(snapToStop(value)));
      render();
    },
    reset() {
      this.set(NEUTRAL);
    },
  };
}
