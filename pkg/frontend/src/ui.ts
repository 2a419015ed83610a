/** DOM rendering for the rating interface.  Pure render-from-state: the
 * whole task area is rebuilt on every state change, which keeps the code
 * simple and is plenty fast for one task at a time. */

import { RatingValue, Task } from "./api.js";
import { Session, SessionState } from "./session.js";

const PAIRWISE_CHOICES: ReadonlyArray<{ value: string; label: string }> = [
  { value: "much_better", label: "A much better" },
  { value: "better", label: "A better" },
  { value: "slightly_better", label: "A slightly better" },
  { value: "about_the_same", label: "About the same" },
  { value: "slightly_worse", label: "A slightly worse" },
  { value: "worse", label: "A worse" },
  { value: "much_worse", label: "A much worse" },
];

const FLUENCY_CHOICES: ReadonlyArray<{ value: number; label: string }> = [
  { value: 1, label: "1 — very disfluent" },
  { value: 2, label: "2" },
  { value: 3, label: "3" },
  { value: 4, label: "4" },
  { value: 5, label: "5 — perfectly fluent" },
];

const ACCURACY_CHOICES: ReadonlyArray<{ value: string; label: string }> = [
  { value: "accurate", label: "Accurate" },
  { value: "inaccurate", label: "Inaccurate" },
];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function panel(title: string, body: string): HTMLElement {
  const box = el("section", "panel");
  box.appendChild(el("h3", "panel-title", title));
  box.appendChild(el("p", "panel-body", body));
  return box;
}

function choicesFor(task: Task): ReadonlyArray<{ value: RatingValue; label: string }> {
  switch (task.kind) {
    case "accuracy":
      return ACCURACY_CHOICES;
    case "fluency":
      return FLUENCY_CHOICES;
    case "pairwise":
      return PAIRWISE_CHOICES;
  }
}

function instructionsFor(task: Task): string {
  switch (task.kind) {
    case "accuracy":
      return "Does the text state exactly the facts in the reference — nothing missing, nothing added, nothing wrong?";
    case "fluency":
      return "How fluent and natural is this text, ignoring whether it is factually correct?";
    case "pairwise":
      return "Which text is better overall — more fluent and more natural?";
  }
}

function taskPanels(task: Task): HTMLElement {
  const wrap = el("div", "panels");
  if (task.kind === "accuracy") {
    wrap.appendChild(panel("Reference", task.payload.gold ?? ""));
    wrap.appendChild(panel("Text to judge", task.payload.prediction ?? ""));
  } else if (task.kind === "fluency") {
    wrap.appendChild(panel("Text to judge", task.payload.prediction ?? ""));
  } else {
    wrap.appendChild(panel("Text A", task.payload.text_a ?? ""));
    wrap.appendChild(panel("Text B", task.payload.text_b ?? ""));
  }
  return wrap;
}

export class RatingView {
  private readonly root: HTMLElement;

  constructor(
    root: HTMLElement,
    private readonly session: Session,
  ) {
    this.root = root;
    session.subscribe((s) => this.render(s));
    document.addEventListener("keydown", (ev) => this.onKey(ev));
  }

  private onKey(ev: KeyboardEvent): void {
    const state = this.session.getState();
    if (state.phase !== "rating" || state.task === null) {
      return;
    }
    if (ev.target instanceof HTMLInputElement) {
      return;
    }
    const choices = choicesFor(state.task);
    const index = Number.parseInt(ev.key, 10) - 1;
    if (index >= 0 && index < choices.length) {
      this.session.select(choices[index].value);
    } else if (ev.key === "Enter" && this.session.canSubmit()) {
      void this.session.submit();
    }
  }

  render(state: SessionState): void {
    this.root.replaceChildren();
    this.root.appendChild(this.header(state));
    if (state.notice) {
      this.root.appendChild(el("p", "notice", state.notice));
    }
    switch (state.phase) {
      case "loading":
        this.root.appendChild(el("p", "status", "Loading…"));
        break;
      case "done":
        this.root.appendChild(
          el("p", "status done", "No more tasks for you. Thank you!"),
        );
        break;
      case "error":
        this.root.appendChild(
          el("p", "status error", state.errorMessage ?? "Something went wrong."),
        );
        this.root.appendChild(this.retryButton());
        break;
      case "rating":
        this.renderTask(state);
        break;
    }
  }

  private header(state: SessionState): HTMLElement {
    const bar = el("header", "topbar");
    bar.appendChild(el("span", "rater", `Rater: ${this.session.rater}`));
    bar.appendChild(
      el(
        "span",
        "progress",
        `You: ${state.submitted} · All: ${state.totalRatings} ratings, ` +
          `${state.closedTasks}/${state.totalTasks} tasks closed`,
      ),
    );
    return bar;
  }

  private renderTask(state: SessionState): void {
    const task = state.task;
    if (task === null) {
      return;
    }
    this.root.appendChild(el("h2", "kind", `${task.kind} judgement`));
    this.root.appendChild(el("p", "instructions", instructionsFor(task)));
    this.root.appendChild(taskPanels(task));

    const choiceRow = el("div", "choices");
    for (const [i, choice] of choicesFor(task).entries()) {
      const button = el("button", "choice", `${i + 1}. ${choice.label}`);
      button.dataset.value = String(choice.value);
      if (state.selection === choice.value) {
        button.classList.add("selected");
      }
      button.addEventListener("click", () => this.session.select(choice.value));
      choiceRow.appendChild(button);
    }
    this.root.appendChild(choiceRow);

    if (state.errorMessage) {
      this.root.appendChild(el("p", "inline-error", state.errorMessage));
    }

    const actions = el("div", "actions");
    const submit = el("button", "submit", "Submit");
    submit.disabled = !this.session.canSubmit();
    submit.addEventListener("click", () => void this.session.submit());
    actions.appendChild(submit);
    const skip = el("button", "skip", "Skip");
    skip.addEventListener("click", () => void this.session.skip());
    actions.appendChild(skip);
    this.root.appendChild(actions);
  }

  private retryButton(): HTMLElement {
    const button = el("button", "retry", "Retry");
    button.addEventListener("click", () => void this.session.retry());
    return button;
  }
}
