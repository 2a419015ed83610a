/** Session state machine, kept free of DOM concerns so it is directly
 * testable.  One in-flight task per session; optimistic advance with
 * rollback on error. */

import { ApiError, RatingApi, RatingValue, Task } from "./api.js";

export type Phase = "loading" | "rating" | "done" | "error";

export interface SessionState {
  phase: Phase;
  task: Task | null;
  selection: RatingValue | null;
  /** Number of this rater's successful submits, reconciled with the
   * service-wide counters from /api/progress. */
  submitted: number;
  totalRatings: number;
  totalTasks: number;
  closedTasks: number;
  notice: string | null;
  errorMessage: string | null;
}

export class Session {
  private state: SessionState = {
    phase: "loading",
    task: null,
    selection: null,
    submitted: 0,
    totalRatings: 0,
    totalTasks: 0,
    closedTasks: 0,
    notice: null,
    errorMessage: null,
  };
  private inFlight = false;
  private listeners: Array<(s: SessionState) => void> = [];

  constructor(
    private readonly api: RatingApi,
    readonly rater: string,
  ) {}

  getState(): SessionState {
    return { ...this.state };
  }

  subscribe(listener: (s: SessionState) => void): void {
    this.listeners.push(listener);
  }

  private update(patch: Partial<SessionState>): void {
    this.state = { ...this.state, ...patch };
    for (const l of this.listeners) {
      l(this.getState());
    }
  }

  canSubmit(): boolean {
    return (
      this.state.phase === "rating" && this.state.selection !== null && !this.inFlight
    );
  }

  select(value: RatingValue): void {
    if (this.state.phase !== "rating") {
      return;
    }
    this.update({ selection: value, errorMessage: null });
  }

  async start(): Promise<void> {
    await this.reconcileProgress();
    await this.advance(null);
  }

  /** Fetch the next task; `notice` is shown once (e.g. after a 409 skip). */
  private async advance(notice: string | null): Promise<void> {
    this.update({ phase: "loading", task: null, selection: null, notice });
    let task: Task | null;
    try {
      task = await this.api.nextTask(this.rater);
    } catch (err) {
      this.update({ phase: "error", errorMessage: describe(err) });
      return;
    }
    if (task === null) {
      this.update({ phase: "done", task: null });
      return;
    }
    this.update({ phase: "rating", task });
  }

  async submit(): Promise<void> {
    if (!this.canSubmit() || this.state.task === null || this.state.selection === null) {
      return;
    }
    const { task, selection } = this.state;
    this.inFlight = true;
    try {
      await this.api.submitRating(task.id, this.rater, selection);
    } catch (err) {
      this.inFlight = false;
      if (err instanceof ApiError && err.status === 409) {
        // Already recorded (e.g. resubmit after refresh): no data lost,
        // move on with a notice.
        await this.advance("That rating was already recorded; moving on.");
        await this.reconcileProgress();
        return;
      }
      if (err instanceof ApiError && err.status === 422) {
        this.update({ errorMessage: err.detail });
        return;
      }
      this.update({ phase: "error", errorMessage: describe(err) });
      return;
    }
    this.inFlight = false;
    this.update({ submitted: this.state.submitted + 1 });
    await this.reconcileProgress();
    await this.advance(null);
  }

  /** Skip without rating; recorded as a non-rating (nothing is posted). */
  async skip(): Promise<void> {
    if (this.state.phase !== "rating" || this.inFlight) {
      return;
    }
    await this.advance("Skipped.");
  }

  async retry(): Promise<void> {
    await this.advance(null);
  }

  private async reconcileProgress(): Promise<void> {
    try {
      const p = await this.api.progress();
      this.update({
        totalRatings: p.ratings,
        totalTasks: p.tasks,
        closedTasks: p.closed,
      });
    } catch {
      // Progress is advisory; rating must still work if it fails.
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return err.detail;
  }
  return err instanceof Error ? err.message : String(err);
}
