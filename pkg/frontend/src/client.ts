export type ColorizeMode = 'hint' | 'auto' | 'blank';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export type ColorizeResult =
  | { ok: true; png: Uint8Array<ArrayBuffer> }
  | { ok: false; status: number | null; detail: string };

/**
 * Submit one colorization request. Non-2xx responses surface the server's
 * own reason (the JSON `detail` field when present, the body text
 * otherwise); transport failures come back with status null so callers can
 * offer a retry.
 */
export async function postColorize(
  fetchFn: FetchLike,
  baseUrl: string,
  outlinePng: Uint8Array<ArrayBuffer>,
  hintsPng: Uint8Array<ArrayBuffer> | null,
  mode: ColorizeMode,
): Promise<ColorizeResult> {
  const form = new FormData();
  form.append('outline', new Blob([outlinePng], { type: 'image/png' }), 'outline.png');
  if (hintsPng) {
    form.append('hints', new Blob([hintsPng], { type: 'image/png' }), 'hints.png');
  }
  form.append('mode', mode);

  let response: Response;
  try {
    response = await fetchFn(`${baseUrl}/v1/colorize`, { method: 'POST', body: form });
  } catch (err) {
    const reason = err instanceof Error ? err.message : String(err);
    return { ok: false, status: null, detail: `network error: ${reason}` };
  }

  if (!response.ok) {
    let detail = '';
    const body = await response.text();
    try {
      const doc = JSON.parse(body);
      if (doc && typeof doc.detail === 'string') {
        detail = doc.detail;
      }
    } catch {
      // not JSON: fall through to the raw body
    }
    if (!detail) {
      detail = body || `${response.status} ${response.statusText}`.trim();
    }
    return { ok: false, status: response.status, detail };
  }

  return { ok: true, png: new Uint8Array(await response.arrayBuffer()) };
}
