// Length-prefixed JSON framing for the plain TCP transport: each message is
// a 4-byte big-endian byte count followed by UTF-8 JSON.  Browser clients use
// WebSocket text frames instead and never touch this module.

export const MAX_MESSAGE_BYTES = 1 << 20;

const encoder = new TextEncoder();
const decoder = new TextDecoder();

export function encodeFrame(message: unknown): Uint8Array {
  const body = encoder.encode(JSON.stringify(message));
  if (body.length > MAX_MESSAGE_BYTES) {
    throw new Error(`message too large: ${body.length} bytes`);
  }
  const out = new Uint8Array(4 + body.length);
  new DataView(out.buffer).setUint32(0, body.length, false);
  out.set(body, 4);
  return out;
}

/** Incremental decoder: feed arbitrary chunks, get complete messages out. */
export class FrameDecoder {
  private buffer = new Uint8Array(0);

  push(chunk: Uint8Array): unknown[] {
    const joined = new Uint8Array(this.buffer.length + chunk.length);
    joined.set(this.buffer, 0);
    joined.set(chunk, this.buffer.length);
    this.buffer = joined;

    const messages: unknown[] = [];
    while (this.buffer.length >= 4) {
      const view = new DataView(
        this.buffer.buffer, this.buffer.byteOffset, this.buffer.byteLength);
      const length = view.getUint32(0, false);
      if (length > MAX_MESSAGE_BYTES) {
        throw new Error(`incoming message too large: ${length} bytes`);
      }
      if (this.buffer.length < 4 + length) break;
      const body = this.buffer.subarray(4, 4 + length);
      messages.push(JSON.parse(decoder.decode(body)));
      this.buffer = this.buffer.subarray(4 + length);
    }
    return messages;
  }
}
