/**
 * Latest-wins request sequencing: at most one render in flight, newer
 * requests issued while busy coalesce into a single pending slot, and any
 * response older than the newest applied one is discarded by sequence
 * number (transports may complete out of order).
 */

export type Transport<P, R> = (params: P, seq: number) => Promise<R>;

export class LatestWins<P, R> {
  private nextSeq = 1;
  private newestApplied = 0;
  private inFlight = false;
  private pending: P | null = null;

  constructor(
    private readonly transport: Transport<P, R>,
    private readonly apply: (result: R, seq: number) => void,
    private readonly onError: (err: unknown) => void = () => {},
  ) {}

  get busy(): boolean {
    return this.inFlight;
  }

  /** Issue a request, or queue it as the (single) pending one when busy. */
  request(params: P): void {
    if (this.inFlight) {
      this.pending = params;
      return;
    }
    this.send(params);
  }

  /** True when the sequence number is newer than anything applied so far. */
  shouldApply(seq: number): boolean {
    if (seq <= this.newestApplied) return false;
    this.newestApplied = seq;
    return true;
  }

  private send(params: P): void {
    const seq = this.nextSeq++;
    this.inFlight = true;
    this.transport(params, seq)
      .then((result) => {
        if (this.shouldApply(seq)) this.apply(result, seq);
      })
      .catch((err) => this.onError(err))
      .finally(() => {
        this.inFlight = false;
        if (this.pending !== null) {
          const next = this.pending;
          this.pending = null;
          this.send(next);
        }
      });
  }
}
