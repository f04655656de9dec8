import { ApiClient, ApiError } from "./client.js";
import type { RatingEntry, SessionDescriptor, TaskDescriptor } from "./types.js";

export type SubmitOutcome =
  | { ok: true; finished: boolean }
  | { ok: false; message: string; offenders: string[]; retryable: boolean };

function key(stimulusId: string, metric: string): string {
  return `${stimulusId}::${metric}`;
}

/**
 * Per-session page state machine.
 *
 * Ratings live in local page state keyed by (stimulus, metric), so moving
 * back and forth between pages restores what the participant entered, and a
 * failed submission loses nothing.
 */
export class SessionController {
  readonly descriptor: SessionDescriptor;
  private pageIndex = 0;
  private finished = false;
  private readonly ratings: Map<string, number>[];
  private readonly submitted: boolean[];

  constructor(descriptor: SessionDescriptor) {
    this.descriptor = descriptor;
    this.ratings = descriptor.tasks.map(() => new Map());
    this.submitted = descriptor.tasks.map(() => false);
  }

  get currentIndex(): number {
    return this.pageIndex;
  }

  get pageCount(): number {
    return this.descriptor.tasks.length;
  }

  get isFinished(): boolean {
    return this.finished;
  }

  get currentTask(): TaskDescriptor {
    const task = this.descriptor.tasks[this.pageIndex];
    if (!task) throw new Error(`no task at page ${this.pageIndex}`);
    return task;
  }

  setRating(stimulusId: string, metric: string, value: number): void {
    const { min, max } = this.descriptor.scale;
    if (!Number.isInteger(value) || value < min || value > max) {
      throw new Error(`rating must be an integer in [${min}, ${max}], got ${value}`);
    }
    this.ratings[this.pageIndex]!.set(key(stimulusId, metric), value);
  }

  getRating(stimulusId: string, metric: string, page = this.pageIndex): number | undefined {
    return this.ratings[page]?.get(key(stimulusId, metric));
  }

  /** Submission stays disabled until every (stimulus, metric) pair is set. */
  isPageComplete(page = this.pageIndex): boolean {
    const task = this.descriptor.tasks[page];
    if (!task) return false;
    const entered = this.ratings[page]!;
    for (const stimulus of task.stimuli) {
      for (const metric of this.descriptor.metrics) {
        if (!entered.has(key(stimulus.stimulus_id, metric))) return false;
      }
    }
    return true;
  }

  isPageSubmitted(page = this.pageIndex): boolean {
    return this.submitted[page] ?? false;
  }

  pageRatings(page = this.pageIndex): RatingEntry[] {
    const task = this.descriptor.tasks[page];
    if (!task) return [];
    const entered = this.ratings[page]!;
    const out: RatingEntry[] = [];
    for (const stimulus of task.stimuli) {
      for (const metric of this.descriptor.metrics) {
        const value = entered.get(key(stimulus.stimulus_id, metric));
        if (value !== undefined) {
          out.push({ stimulus_id: stimulus.stimulus_id, metric, value });
        }
      }
    }
    return out;
  }

  get canGoBack(): boolean {
    return !this.finished && this.pageIndex > 0;
  }

  goBack(): void {
    if (this.canGoBack) this.pageIndex -= 1;
  }

  goForwardIfSubmitted(): boolean {
    if (this.pageIndex < this.pageCount - 1 && this.isPageSubmitted()) {
      this.pageIndex += 1;
      return true;
    }
    return false;
  }

  async submitCurrent(client: ApiClient): Promise<SubmitOutcome> {
    if (!this.isPageComplete()) {
      return {
        ok: false,
        message: "rate every stimulus before submitting",
        offenders: [],
        retryable: false,
      };
    }
    const task = this.currentTask;
    try {
      await client.submitRatings({
        session_id: this.descriptor.session_id,
        excerpt_id: task.excerpt_id,
        ratings: this.pageRatings(),
      });
    } catch (error) {
      // server rejection or network failure: page state is untouched
      if (error instanceof ApiError) {
        return { ok: false, message: error.message, offenders: error.offenders, retryable: true };
      }
      const message = error instanceof Error ? error.message : String(error);
      return { ok: false, message: `network failure: ${message}`, offenders: [], retryable: true };
    }
    this.submitted[this.pageIndex] = true;
    if (this.pageIndex === this.pageCount - 1) {
      this.finished = true;
    } else {
      this.pageIndex += 1;
    }
    return { ok: true, finished: this.finished };
  }
}
