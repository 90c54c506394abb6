/** DOM wiring for the study page. Served from the same origin as the API. */

import { CurrentItem, StudyClient, SubmitStatus } from "./api.js";
import { startCountdown } from "./countdown.js";
import { Driver, runSession } from "./session.js";
import { SliderHandle, StopValue, createSlider } from "./slider.js";

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

/** Turns the submit button into a driver. An unconfirmed slider position is
 * not a selection: if the deadline wins the race, the session loop submits
 * neutral, not whatever the handle was parked on. */
class FormDriver implements Driver {
  private resolveCurrent: ((value: number) => void) | null = null;

  constructor(
    private readonly slider: SliderHandle,
    button: HTMLButtonElement,
  ) {
    button.addEventListener("click", () => {
      this.resolveCurrent?.(this.slider.value());
      this.resolveCurrent = null;
    });
  }

  decide(_item: CurrentItem): Promise<number> {
    this.slider.reset();
    return new Promise((resolve) => {
      this.resolveCurrent = resolve;
    });
  }
}

function renderReport(target: HTMLElement, report: Record<string, unknown>): void {
  const rows = ["tp", "tn", "fp", "fn", "u", "precision", "recall", "accuracy", "auc"]
    .map((k) => {
      const v = report[k];
      const shown = typeof v === "number" && !Number.isInteger(v) ? v.toFixed(4) : String(v);
      return `<tr><td>${k}</td><td>${shown}</td></tr>`;
    })
    .join("");
  target.innerHTML = `<table>${rows}</table>`;
}

async function startStudy(): Promise<void> {
  const setup = byId<HTMLElement>("setup");
  const study = byId<HTMLElement>("study");
  const done = byId<HTMLElement>("done");
  const status = byId<HTMLElement>("status");
  const image = byId<HTMLImageElement>("radiograph");
  const progress = byId<HTMLElement>("progress");
  const clockEl = byId<HTMLElement>("clock");

  const observer = byId<HTMLInputElement>("observer").value.trim();
  const deckSeed = Number(byId<HTMLInputElement>("deck-seed").value);
  if (!observer || !Number.isInteger(deckSeed)) {
    status.textContent = "enter an observer label and an integer deck seed";
    return;
  }

  const slider = createSlider(document);
  byId<HTMLElement>("slider-mount").replaceChildren(slider.element);
  const submit = byId<HTMLButtonElement>("submit");
  const driver = new FormDriver(slider, submit);
  const client = new StudyClient("");

  setup.hidden = true;
  study.hidden = false;
  let stopClock: () => void = () => {};

  try {
    const { report } = await runSession(client, observer, deckSeed, driver, {
      onItem(item: CurrentItem) {
        // the order is server-driven, so the earliest this image can start
        // downloading is now; the deadline was stamped at delivery, meaning
        // load time spends the observer's budget, same as at a study site
        image.src = client.imageUrl(item.imageUrl);
        progress.textContent = `image ${item.index + 1} of ${item.total}`;
        status.textContent = "";
        submit.disabled = false;
        stopClock();
        stopClock = startCountdown(clockEl, item.deadlineEpochMs, () => {
          submit.disabled = true;
          status.textContent = "time expired, recorded as unsure";
        });
      },
      onSubmitted(_item: CurrentItem, value: StopValue, state: SubmitStatus) {
        submit.disabled = true;
        status.textContent = state === "accepted" ? `recorded ${value}` : "recorded late";
      },
    });
    stopClock();
    study.hidden = true;
    done.hidden = false;
    renderReport(byId<HTMLElement>("report"), report as unknown as Record<string, unknown>);
  } catch (err) {
    stopClock();
    status.textContent = `session failed: ${err}`;
  }
}

byId<HTMLButtonElement>("start").addEventListener("click", () => {
  void startStudy();
});
