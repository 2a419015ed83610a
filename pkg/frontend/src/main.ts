/** Entry point: ask for a rater id, then run a rating session. */

import { RatingApi } from "./api.js";
import { Session } from "./session.js";
import { RatingView } from "./ui.js";

export function mount(root: HTMLElement, api: RatingApi = new RatingApi()): void {
  const form = document.createElement("form");
  form.className = "login";
  const label = document.createElement("label");
  label.textContent = "Rater id";
  label.htmlFor = "rater-id";
  const input = document.createElement("input");
  input.id = "rater-id";
  input.name = "rater";
  input.autocomplete = "username";
  input.required = true;
  input.placeholder = "e.g. r1";
  const button = document.createElement("button");
  button.type = "submit";
  button.textContent = "Start rating";
  form.append(label, input, button);
  root.replaceChildren(form);
  input.focus();

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const rater = input.value.trim();
    if (!rater) {
      return;
    }
    const session = new Session(api, rater);
    new RatingView(root, session);
    void session.start();
  });
}

const appRoot = document.getElementById("app");
if (appRoot) {
  mount(appRoot);
}
