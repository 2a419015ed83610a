/** Typed client for the rating service. Exactly four endpoints; UTF-8 JSON. */

export type TaskKind = "accuracy" | "fluency" | "pairwise";

export interface Task {
  id: string;
  kind: TaskKind;
  payload: Record<string, string>;
}

export interface Progress {
  tasks: number;
  closed: number;
  ratings: number;
}

export type RatingValue = string | number;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function errorDetail(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { detail?: string };
    return body.detail ?? resp.statusText;
  } catch {
    return resp.statusText;
  }
}

export class RatingApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  async nextTask(rater: string): Promise<Task | null> {
    const url = `${this.baseUrl}/api/tasks/next?rater=${encodeURIComponent(rater)}`;
    const resp = await this.fetchFn(url);
    if (!resp.ok) {
      throw new ApiError(resp.status, await errorDetail(resp));
    }
    const body = (await resp.json()) as { task: Task | null };
    return body.task;
  }

  async submitRating(taskId: string, rater: string, value: RatingValue): Promise<void> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/ratings`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ task_id: taskId, rater, value }),
    });
    if (!resp.ok) {
      throw new ApiError(resp.status, await errorDetail(resp));
    }
  }

  async progress(): Promise<Progress> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/progress`);
    if (!resp.ok) {
      throw new ApiError(resp.status, await errorDetail(resp));
    }
    return (await resp.json()) as Progress;
  }
}
