/**
 * Bounded snapshot history at stroke granularity. `record` is called with
 * the layer bytes as they were before a stroke begins; undo/redo exchange
 * the live bytes against the stacks, so undo-then-redo round-trips exactly.
 */
export class SnapshotHistory {
  private undoStack: Uint8ClampedArray<ArrayBuffer>[] = [];
  private redoStack: Uint8ClampedArray<ArrayBuffer>[] = [];

  constructor(private readonly limit = 32) {
    if (limit < 1) {
      throw new Error(`history limit must be >= 1, got ${limit}`);
    }
  }

  get undoDepth(): number {
    return this.undoStack.length;
  }

  get canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  get canRedo(): boolean {
    return this.redoStack.length > 0;
  }

  record(before: Uint8ClampedArray): void {
    this.undoStack.push(before.slice());
    if (this.undoStack.length > this.limit) {
      this.undoStack.shift();
    }
    this.redoStack = [];
  }

  undo(current: Uint8ClampedArray): Uint8ClampedArray<ArrayBuffer> | null {
    const previous = this.undoStack.pop();
    if (!previous) {
      return null;
    }
    this.redoStack.push(current.slice());
    return previous;
  }

  redo(current: Uint8ClampedArray): Uint8ClampedArray<ArrayBuffer> | null {
    const next = this.redoStack.pop();
    if (!next) {
      return null;
    }
    this.undoStack.push(current.slice());
    return next;
  }

  reset(): void {
    this.undoStack = [];
    this.redoStack = [];
  }
}
