// Debounced retrieval controller: the slider can scrub freely, but only the
// settled value triggers a request, and a stale response (an older request
// resolving after a newer one) is never rendered. Timers and the client are
// injected so the logic is testable without a browser.

import { Direction, MvretClient, RetrieveResponse } from './api.js';

export interface QuerySpec {
    queryId: string;
    direction: Direction;
    alpha: number;
    k: number;
}

export interface ControllerCallbacks {
    onResults: (response: RetrieveResponse, spec: QuerySpec) => void;
    onError: (message: string) => void;
    onPending?: (spec: QuerySpec) => void;
}

type TimerId = ReturnType<typeof setTimeout>;
export type ScheduleFn = (fn: () => void, ms: number) => TimerId;
export type CancelFn = (id: TimerId) => void;

export const SETTLE_MS = 150;

export class RetrieveController {
    private timer: TimerId | null = null;
    private pendingSpec: QuerySpec | null = null;
    private nextSeq = 0;
    private renderedSeq = -1;
    private requestsSent = 0;

    constructor(
        private client: MvretClient,
        private callbacks: ControllerCallbacks,
        private schedule: ScheduleFn = (fn, ms) => setTimeout(fn, ms),
        private cancel: CancelFn = (id) => clearTimeout(id),
        private settleMs: number = SETTLE_MS,
    ) {}

    /** Total requests actually issued (settled values only). */
    sentCount(): number {
        return this.requestsSent;
    }

    /** Register a new desired query state; restarts the settle window. */
    request(spec: QuerySpec): void {
        this.pendingSpec = spec;
        if (this.timer !== null) {
            this.cancel(this.timer);
        }
        this.timer = this.schedule(() => {
            this.timer = null;
            if (this.pendingSpec) {
                void this.fire(this.pendingSpec);
            }
        }, this.settleMs);
    }

    /** Issue immediately, bypassing the settle window (e.g. initial load). */
    requestNow(spec: QuerySpec): void {
        this.pendingSpec = spec;
        if (this.timer !== null) {
            this.cancel(this.timer);
            this.timer = null;
        }
        void this.fire(spec);
    }

    private async fire(spec: QuerySpec): Promise<void> {
        const seq = this.nextSeq++;
        this.requestsSent++;
        this.callbacks.onPending?.(spec);
        try {
            const response = await this.client.retrieve(
                spec.queryId, spec.direction, spec.alpha, spec.k);
            if (seq <= this.renderedSeq) {
                return; // a newer request already rendered; drop this one
            }
            this.renderedSeq = seq;
            this.callbacks.onResults(response, spec);
        } catch (err) {
            if (seq <= this.renderedSeq) {
                return;
            }
            this.renderedSeq = seq;
            this.callbacks.onError(err instanceof Error ? err.message : String(err));
        }
    }
}
