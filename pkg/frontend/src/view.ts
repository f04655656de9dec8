import type { ApiClient } from "./client.js";
import type { SessionController } from "./controller.js";

// Stimuli are labelled by page position only; system names never reach the
// browser (the service sends opaque stimulus ids) and must never be rendered.
function stimulusLabel(index: number): string {
  return `Stimulus ${String.fromCharCode(65 + index)}`;
}

const METRIC_TITLES: Record<string, string> = {
  OVRL: "Overall quality",
  SIG: "Signal distortion",
  BAK: "Background intrusiveness",
};

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function audioPlayer(doc: Document, url: string, label: string): HTMLElement {
  const wrap = el(doc, "div", "player");
  wrap.appendChild(el(doc, "span", "player-label", label));
  const audio = el(doc, "audio");
  audio.setAttribute("controls", "");
  audio.setAttribute("preload", "none");
  audio.src = url;
  wrap.appendChild(audio);
  return wrap;
}

function ratingRow(
  doc: Document,
  controller: SessionController,
  stimulusId: string,
  metric: string,
  onChange: () => void,
): HTMLElement {
  const { min, max } = controller.descriptor.scale;
  const anchors = controller.descriptor.anchors[metric] ?? {};
  const row = el(doc, "div", "rating-row");
  row.appendChild(el(doc, "span", "metric-name", METRIC_TITLES[metric] ?? metric));
  const group = el(doc, "div", "rating-scale");
  group.setAttribute("role", "radiogroup");
  for (let value = min; value <= max; value += 1) {
    const label = el(doc, "label", "rating-choice");
    const input = el(doc, "input");
    input.type = "radio";
    input.name = `${stimulusId}-${metric}`;
    input.value = String(value);
    if (controller.getRating(stimulusId, metric) === value) input.checked = true;
    input.addEventListener("change", () => {
      controller.setRating(stimulusId, metric, value);
      onChange();
    });
    label.appendChild(input);
    const anchor = anchors[String(value)];
    label.appendChild(
      el(doc, "span", "rating-caption", anchor ? `${value} - ${anchor}` : String(value)),
    );
    group.appendChild(label);
  }
  row.appendChild(group);
  return row;
}

export interface ViewHooks {
  onSubmitted?: () => void;
  onError?: (message: string) => void;
}

/** Render the controller's current page (or the completion screen). */
export function renderSession(
  container: HTMLElement,
  controller: SessionController,
  client: ApiClient,
  hooks: ViewHooks = {},
): void {
  const doc = container.ownerDocument;
  container.textContent = "";

  if (controller.isFinished) {
    const done = el(doc, "div", "completion");
    done.appendChild(el(doc, "h2", undefined, "All done"));
    done.appendChild(
      el(doc, "p", undefined, "Your ratings were recorded. You can close this page."),
    );
    container.appendChild(done);
    return;
  }

  const task = controller.currentTask;
  const page = el(doc, "div", "page");

  const progress = el(
    doc,
    "p",
    "progress",
    `Page ${controller.currentIndex + 1} of ${controller.pageCount}`,
  );
  page.appendChild(progress);

  if (task.training) {
    page.appendChild(
      el(
        doc,
        "div",
        "training-banner",
        "Training page: listen to the reference and the stimuli to calibrate " +
          "your judgement. Ratings on this page are not scored.",
      ),
    );
  }

  page.appendChild(audioPlayer(doc, client.audioUrl(task.mixture_url), "Reference mix"));

  const form = el(doc, "div", "stimuli");
  const errorBanner = el(doc, "p", "error-banner");
  errorBanner.setAttribute("hidden", "");

  const submit = el(doc, "button", "submit", "Submit ratings");
  const refreshSubmitState = () => {
    if (controller.isPageComplete()) {
      submit.removeAttribute("disabled");
    } else {
      submit.setAttribute("disabled", "");
    }
  };

  task.stimuli.forEach((stimulus, index) => {
    const block = el(doc, "div", "stimulus");
    block.appendChild(el(doc, "h3", undefined, stimulusLabel(index)));
    block.appendChild(audioPlayer(doc, client.audioUrl(stimulus.url), "Play"));
    for (const metric of controller.descriptor.metrics) {
      block.appendChild(
        ratingRow(doc, controller, stimulus.stimulus_id, metric, refreshSubmitState),
      );
    }
    form.appendChild(block);
  });
  page.appendChild(form);
  page.appendChild(errorBanner);

  const nav = el(doc, "div", "nav");
  const back = el(doc, "button", "back", "Back");
  if (!controller.canGoBack) back.setAttribute("disabled", "");
  back.addEventListener("click", () => {
    controller.goBack();
    renderSession(container, controller, client, hooks);
  });
  nav.appendChild(back);

  refreshSubmitState();
  submit.addEventListener("click", () => {
    submit.setAttribute("disabled", "");
    void controller.submitCurrent(client).then((outcome) => {
      if (outcome.ok) {
        hooks.onSubmitted?.();
        renderSession(container, controller, client, hooks);
      } else {
        // inline message; entered ratings stay on the page
        errorBanner.textContent = outcome.offenders.length
          ? `${outcome.message}: ${outcome.offenders.join("; ")}`
          : outcome.message;
        errorBanner.removeAttribute("hidden");
        refreshSubmitState();
        hooks.onError?.(outcome.message);
      }
    });
  });
  nav.appendChild(submit);
  page.appendChild(nav);

  container.appendChild(page);
}

/** Render a load-failure screen with a retry button; no state is lost. */
export function renderLoadFailure(
  container: HTMLElement,
  message: string,
  retry: () => void,
): void {
  const doc = container.ownerDocument;
  container.textContent = "";
  const box = el(doc, "div", "load-failure");
  box.appendChild(el(doc, "h2", undefined, "Could not reach the test service"));
  box.appendChild(el(doc, "p", "error-banner", message));
  const button = el(doc, "button", "retry", "Retry");
  button.addEventListener("click", retry);
  box.appendChild(button);
  container.appendChild(box);
}
