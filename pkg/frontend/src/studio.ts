import { HintLayer, Point, Rgb } from './layer.js';
import { SnapshotHistory } from './undo.js';
import { encodeRgbaPng, parsePngHeader } from './png.js';
import { ColorizeMode, FetchLike, postColorize } from './client.js';

export interface Brush {
  color: Rgb;
  radius: number;
  mode: 'paint' | 'erase';
}

export const MIN_RADIUS = 1;
export const MAX_RADIUS = 64;
export const DEFAULT_BASE_URL = 'http://127.0.0.1:8765';

export type RequestOutcome = 'ok' | 'busy' | 'error';

/**
 * All studio state and behavior, free of DOM concerns: the locked outline
 * bytes, the editable hint layer, brush settings, the last result, and the
 * one-request-at-a-time service client. The page layer renders from this
 * and forwards events into it.
 */
export class Studio {
  outlineBytes: Uint8Array<ArrayBuffer> | null = null;
  width = 0;
  height = 0;
  hints: HintLayer | null = null;
  brush: Brush = { color: { r: 224, g: 82, b: 82 }, radius: 8, mode: 'paint' };
  result: Uint8Array<ArrayBuffer> | null = null;
  baseUrl: string;
  busy = false;
  banner: string | null = null;
  canRetry = false;
  onChange: (() => void) | null = null;

  private history = new SnapshotHistory(32);
  private stroking = false;
  private lastPoint: Point | null = null;
  private lastMode: ColorizeMode | null = null;
  private readonly fetchFn: FetchLike;

  constructor(fetchFn?: FetchLike, baseUrl: string = DEFAULT_BASE_URL) {
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
    this.baseUrl = baseUrl.replace(/\/+$/, '');
  }

  private notify(): void {
    this.onChange?.();
  }

  /**
   * Replace the outline with a new PNG; resets the hint layer to fully
   * transparent at the new dimensions and clears the result pane. Bytes
   * that are not a PNG leave every layer untouched and raise the banner.
   */
  loadOutline(bytes: Uint8Array): boolean {
    const header = parsePngHeader(bytes);
    if (!header) {
      this.banner = 'that file is not a readable PNG — keeping the current canvas';
      this.notify();
      return false;
    }
    this.outlineBytes = bytes.slice();
    this.width = header.width;
    this.height = header.height;
    this.hints = new HintLayer(header.width, header.height);
    this.result = null;
    this.banner = null;
    this.canRetry = false;
    this.history.reset();
    this.stroking = false;
    this.notify();
    return true;
  }

  setBrush(update: Partial<Brush>): void {
    this.brush = { ...this.brush, ...update };
    this.brush.radius = Math.min(MAX_RADIUS, Math.max(MIN_RADIUS, this.brush.radius));
    this.notify();
  }

  setBaseUrl(url: string): void {
    this.baseUrl = url.replace(/\/+$/, '');
    this.notify();
  }

  private get strokeColor(): Rgb | null {
    return this.brush.mode === 'erase' ? null : this.brush.color;
  }

  /** Start a stroke: snapshot for undo, then stamp the first disc. */
  beginStroke(p: Point): void {
    if (!this.hints) {
      return;
    }
    this.history.record(this.hints.data);
    this.stroking = true;
    this.lastPoint = p;
    this.hints.paintStroke([p], this.brush.radius, this.strokeColor);
    this.notify();
  }

  extendStroke(p: Point): void {
    if (!this.hints || !this.stroking || !this.lastPoint) {
      return;
    }
    this.hints.paintStroke([this.lastPoint, p], this.brush.radius, this.strokeColor);
    this.lastPoint = p;
    this.notify();
  }

  endStroke(): void {
    this.stroking = false;
    this.lastPoint = null;
  }

  /** Whole stroke in one call (used by tests and programmatic painting). */
  paintStroke(points: Point[]): void {
    if (!this.hints || points.length === 0) {
      return;
    }
    this.history.record(this.hints.data);
    this.hints.paintStroke(points, this.brush.radius, this.strokeColor);
    this.notify();
  }

  get canUndo(): boolean {
    return this.history.canUndo;
  }

  get canRedo(): boolean {
    return this.history.canRedo;
  }

  undo(): void {
    if (!this.hints) {
      return;
    }
    const previous = this.history.undo(this.hints.data);
    if (previous) {
      this.hints = new HintLayer(this.width, this.height, previous);
      this.notify();
    }
  }

  redo(): void {
    if (!this.hints) {
      return;
    }
    const next = this.history.redo(this.hints.data);
    if (next) {
      this.hints = new HintLayer(this.width, this.height, next);
      this.notify();
    }
  }

  /** The outline exactly as loaded; the editor never rewrites it. */
  exportOutline(): Uint8Array<ArrayBuffer> {
    if (!this.outlineBytes) {
      throw new Error('no outline loaded');
    }
    return this.outlineBytes;
  }

  exportHints(): Uint8Array<ArrayBuffer> {
    if (!this.hints) {
      throw new Error('no outline loaded');
    }
    return encodeRgbaPng(this.width, this.height, this.hints.data);
  }

  /**
   * Submit the current layers. Exactly one request may be in flight; extra
   * calls return 'busy' without touching the network. The hint layer is
   * kept as-is so the user can iterate on the result.
   */
  async requestColorize(mode: ColorizeMode): Promise<RequestOutcome> {
    if (!this.outlineBytes) {
      this.banner = 'load an outline before requesting colorization';
      this.notify();
      return 'error';
    }
    if (this.busy) {
      return 'busy';
    }
    this.busy = true;
    this.banner = null;
    this.canRetry = false;
    this.lastMode = mode;
    this.notify();
    const outcome = await postColorize(
      this.fetchFn, this.baseUrl, this.outlineBytes, this.exportHints(), mode,
    );
    this.busy = false;
    if (!outcome.ok) {
      this.banner = outcome.detail;
      this.canRetry = outcome.status === null;
      this.notify();
      return 'error';
    }
    this.result = outcome.png;
    this.notify();
    return 'ok';
  }

  /** Re-submit the last request after a transport failure. */
  retry(): Promise<RequestOutcome> {
    if (!this.lastMode) {
      return Promise.resolve('error');
    }
    return this.requestColorize(this.lastMode);
  }
}
