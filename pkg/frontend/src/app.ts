import { Studio } from './studio.js';
import type { ColorizeMode } from './client.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function hexToRgb(hex: string): { r: number; g: number; b: number } {
  const n = parseInt(hex.slice(1), 16);
  return { r: (n >> 16) & 0xff, g: (n >> 8) & 0xff, b: n & 0xff };
}

const studio = new Studio();

const fileInput = el<HTMLInputElement>('outline-file');
const colorInput = el<HTMLInputElement>('brush-color');
const radiusInput = el<HTMLInputElement>('brush-radius');
const radiusLabel = el<HTMLSpanElement>('radius-label');
const paintBtn = el<HTMLButtonElement>('tool-paint');
const eraseBtn = el<HTMLButtonElement>('tool-erase');
const modeSelect = el<HTMLSelectElement>('mode');
const colorizeBtn = el<HTMLButtonElement>('colorize');
const undoBtn = el<HTMLButtonElement>('undo');
const redoBtn = el<HTMLButtonElement>('redo');
const banner = el<HTMLDivElement>('banner');
const bannerText = el<HTMLSpanElement>('banner-text');
const retryBtn = el<HTMLButtonElement>('retry');
const baseUrlInput = el<HTMLInputElement>('base-url');
const editor = el<HTMLDivElement>('editor');
const outlineCanvas = el<HTMLCanvasElement>('outline-canvas');
const hintCanvas = el<HTMLCanvasElement>('hint-canvas');
const resultImg = el<HTMLImageElement>('result');
const resultEmpty = el<HTMLDivElement>('result-empty');

const outlineCtx = outlineCanvas.getContext('2d')!;
const hintCtx = hintCanvas.getContext('2d')!;

baseUrlInput.value = studio.baseUrl;
let resultUrl: string | null = null;

function render(): void {
  if (studio.hints) {
    hintCtx.clearRect(0, 0, hintCanvas.width, hintCanvas.height);
    hintCtx.putImageData(
      new ImageData(studio.hints.data, studio.width, studio.height), 0, 0,
    );
  }
  bannerText.textContent = studio.banner ?? '';
  banner.classList.toggle('hidden', studio.banner === null);
  retryBtn.classList.toggle('hidden', !studio.canRetry);
  colorizeBtn.disabled = studio.busy || !studio.outlineBytes;
  colorizeBtn.textContent = studio.busy ? 'working…' : 'colorize';
  undoBtn.disabled = !studio.canUndo;
  redoBtn.disabled = !studio.canRedo;
  paintBtn.classList.toggle('active', studio.brush.mode === 'paint');
  eraseBtn.classList.toggle('active', studio.brush.mode === 'erase');
  radiusLabel.textContent = `${studio.brush.radius}px`;
  if (studio.result) {
    if (resultUrl) {
      URL.revokeObjectURL(resultUrl);
    }
    resultUrl = URL.createObjectURL(new Blob([studio.result], { type: 'image/png' }));
    resultImg.src = resultUrl;
    resultImg.classList.remove('hidden');
    resultEmpty.classList.add('hidden');
  } else {
    resultImg.classList.add('hidden');
    resultEmpty.classList.remove('hidden');
  }
}

studio.onChange = render;

fileInput.addEventListener('change', async () => {
  const file = fileInput.files?.[0];
  if (!file) {
    return;
  }
  const bytes = new Uint8Array(await file.arrayBuffer());
  if (!studio.loadOutline(bytes)) {
    return;
  }
  outlineCanvas.width = hintCanvas.width = studio.width;
  outlineCanvas.height = hintCanvas.height = studio.height;
  editor.classList.remove('hidden');
  const url = URL.createObjectURL(new Blob([bytes], { type: 'image/png' }));
  const img = new Image();
  img.onload = () => {
    outlineCtx.drawImage(img, 0, 0);
    URL.revokeObjectURL(url);
  };
  img.src = url;
  render();
});

function canvasPoint(e: PointerEvent): { x: number; y: number } {
  const rect = hintCanvas.getBoundingClientRect();
  return {
    x: ((e.clientX - rect.left) / rect.width) * hintCanvas.width,
    y: ((e.clientY - rect.top) / rect.height) * hintCanvas.height,
  };
}

hintCanvas.addEventListener('pointerdown', (e) => {
  hintCanvas.setPointerCapture(e.pointerId);
  studio.beginStroke(canvasPoint(e));
});
hintCanvas.addEventListener('pointermove', (e) => {
  if (e.buttons) {
    studio.extendStroke(canvasPoint(e));
  }
});
hintCanvas.addEventListener('pointerup', () => studio.endStroke());
hintCanvas.addEventListener('pointercancel', () => studio.endStroke());

colorInput.addEventListener('input', () => {
  studio.setBrush({ color: hexToRgb(colorInput.value) });
});
radiusInput.addEventListener('input', () => {
  studio.setBrush({ radius: Number(radiusInput.value) });
});
paintBtn.addEventListener('click', () => studio.setBrush({ mode: 'paint' }));
eraseBtn.addEventListener('click', () => studio.setBrush({ mode: 'erase' }));
undoBtn.addEventListener('click', () => studio.undo());
redoBtn.addEventListener('click', () => studio.redo());
baseUrlInput.addEventListener('change', () => studio.setBaseUrl(baseUrlInput.value));

colorizeBtn.addEventListener('click', () => {
  void studio.requestColorize(modeSelect.value as ColorizeMode);
});
retryBtn.addEventListener('click', () => {
  void studio.retry();
});

document.addEventListener('keydown', (e) => {
  if (!(e.ctrlKey || e.metaKey) || e.key.toLowerCase() !== 'z') {
    return;
  }
  e.preventDefault();
  if (e.shiftKey) {
    studio.redo();
  } else {
    studio.undo();
  }
});

render();
