export interface Rgb {
  r: number;
  g: number;
  b: number;
}

export interface Point {
  x: number;
  y: number;
}

/**
 * The editable hint bitmap: RGBA bytes where alpha is strictly 0 or 255.
 * Painting stamps hard-edged discs (no falloff) so the exported layer keeps
 * binary coverage; erasing sets pixels fully transparent. Stamps falling
 * outside the canvas are clipped silently.
 */
export class HintLayer {
  readonly width: number;
  readonly height: number;
  readonly data: Uint8ClampedArray<ArrayBuffer>;

  constructor(width: number, height: number, data?: Uint8ClampedArray<ArrayBuffer>) {
    if (width < 1 || height < 1) {
      throw new Error(`layer dimensions must be positive, got ${width}x${height}`);
    }
    if (data && data.length !== width * height * 4) {
      throw new Error('pixel buffer does not match the layer dimensions');
    }
    this.width = width;
    this.height = height;
    this.data = data ?? new Uint8ClampedArray(width * height * 4);
  }

  clone(): HintLayer {
    return new HintLayer(this.width, this.height, this.data.slice());
  }

  /** Stamp one filled disc; color null means erase (alpha to 0). */
  stampDisc(cx: number, cy: number, radius: number, color: Rgb | null): void {
    const r2 = radius * radius;
    const yLo = Math.max(0, Math.ceil(cy - radius));
    const yHi = Math.min(this.height - 1, Math.floor(cy + radius));
    const xLo = Math.max(0, Math.ceil(cx - radius));
    const xHi = Math.min(this.width - 1, Math.floor(cx + radius));
    for (let y = yLo; y <= yHi; y++) {
      const dy = y - cy;
      for (let x = xLo; x <= xHi; x++) {
        const dx = x - cx;
        if (dx * dx + dy * dy > r2) {
          continue;
        }
        const i = (y * this.width + x) * 4;
        if (color) {
          this.data[i] = color.r;
          this.data[i + 1] = color.g;
          this.data[i + 2] = color.b;
          this.data[i + 3] = 255;
        } else {
          this.data[i] = 0;
          this.data[i + 1] = 0;
          this.data[i + 2] = 0;
          this.data[i + 3] = 0;
        }
      }
    }
  }

  /**
   * Stamp discs along a polyline, interpolating each segment so consecutive
   * stamps sit at most one pixel apart. A single point is one disc.
   */
  paintStroke(points: Point[], radius: number, color: Rgb | null): void {
    if (points.length === 0) {
      return;
    }
    this.stampDisc(points[0].x, points[0].y, radius, color);
    for (let i = 1; i < points.length; i++) {
      const a = points[i - 1];
      const b = points[i];
      const steps = Math.max(1, Math.ceil(Math.hypot(b.x - a.x, b.y - a.y)));
      for (let s = 1; s <= steps; s++) {
        const t = s / steps;
        this.stampDisc(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), radius, color);
      }
    }
  }
}
