import { describe, expect, it } from "vitest";

import { ApiError, RatingApi } from "../src/api.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("RatingApi", () => {
  it("fetches the next task with the rater id encoded", async () => {
    const calls: string[] = [];
    const api = new RatingApi("", async (input) => {
      calls.push(String(input));
      return jsonResponse(200, {
        task: { id: "t1", kind: "fluency", payload: { prediction: "Ahoj" } },
      });
    });
    const task = await api.nextTask("r 1");
    expect(calls).toEqual(["/api/tasks/next?rater=r%201"]);
    expect(task).toEqual({ id: "t1", kind: "fluency", payload: { prediction: "Ahoj" } });
  });

  it("returns null when no tasks remain", async () => {
    const api = new RatingApi("", async () => jsonResponse(200, { task: null }));
    expect(await api.nextTask("r1")).toBeNull();
  });

  it("posts ratings as JSON", async () => {
    let seen: { url: string; init: RequestInit | undefined } | null = null;
    const api = new RatingApi("http://h", async (input, init) => {
      seen = { url: String(input), init };
      return jsonResponse(200, { ok: true });
    });
    await api.submitRating("t1", "r1", 4);
    expect(seen!.url).toBe("http://h/api/ratings");
    expect(seen!.init?.method).toBe("POST");
    expect(JSON.parse(String(seen!.init?.body))).toEqual({
      task_id: "t1",
      rater: "r1",
      value: 4,
    });
  });

  it("throws ApiError carrying status and detail", async () => {
    const api = new RatingApi("", async () =>
      jsonResponse(409, { detail: "duplicate rating for this task and rater" }),
    );
    const err = await api.submitRating("t1", "r1", "accurate").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(409);
    expect(err.detail).toBe("duplicate rating for this task and rater");
  });

  it("falls back to statusText when the error body is not JSON", async () => {
    const api = new RatingApi("", async () =>
      new Response("boom", { status: 500, statusText: "Internal Server Error" }),
    );
    const err = await api.progress().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.detail).toBe("Internal Server Error");
  });

  it("parses progress counters", async () => {
    const api = new RatingApi("", async () =>
      jsonResponse(200, { tasks: 6, closed: 2, ratings: 7 }),
    );
    expect(await api.progress()).toEqual({ tasks: 6, closed: 2, ratings: 7 });
  });
});
