// Decoder for the LED gateway UDP packets, used by the in-browser strip
// preview and by tests that stand in for the hardware gateway.
//
// Layout (big endian): "TMDT" | version u8 | seq u16 | universe u8 |
// length u16 (always 63) | 63 payload bytes = 21 RGB pixels front strip.

export const LED_MAGIC = "TMDT";
export const LED_VERSION = 1;
export const LED_PIXELS = 21;
export const LED_PAYLOAD_BYTES = LED_PIXELS * 3;
export const LED_PACKET_BYTES = 10 + LED_PAYLOAD_BYTES;

export interface LedPacket {
  seq: number;
  universe: number;
  /** 21 uppercase RRGGBB hex triples in strip order. */
  pixels: string[];
  payloadHex: string;
}

export function decodeLedPacket(data: Uint8Array): LedPacket {
  if (data.length !== LED_PACKET_BYTES) {
    throw new Error(`bad packet size ${data.length}, want ${LED_PACKET_BYTES}`);
  }
  const magic = String.fromCharCode(data[0], data[1], data[2], data[3]);
  if (magic !== LED_MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(magic)}`);
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const version = view.getUint8(4);
  if (version !== LED_VERSION) {
    throw new Error(`unsupported version ${version}`);
  }
  const seq = view.getUint16(5, false);
  const universe = view.getUint8(7);
  const length = view.getUint16(8, false);
  if (length !== LED_PAYLOAD_BYTES) {
    throw new Error(`bad payload length ${length}, want ${LED_PAYLOAD_BYTES}`);
  }
  const payload = data.subarray(10);
  let hex = "";
  for (const byte of payload) {
    hex += byte.toString(16).padStart(2, "0").toUpperCase();
  }
  const pixels: string[] = [];
  for (let i = 0; i < LED_PIXELS; i++) {
    pixels.push(hex.slice(i * 6, i * 6 + 6));
  }
  return { seq, universe, pixels, payloadHex: hex };
}

/**
 * True when seq a is newer than b under uint16 wraparound: a wins when it is
 * ahead by less than half the sequence space.
 */
export function seqNewer(a: number, b: number): boolean {
  return ((a - b) & 0xffff) !== 0 && ((a - b) & 0xffff) < 0x8000;
}

/** Split a broadcast frame's 126-char hex field into 21 pixel triples. */
export function splitFrameHex(data: string): string[] {
  if (data.length !== LED_PIXELS * 6) {
    throw new Error(`bad frame hex length ${data.length}`);
  }
  const pixels: string[] = [];
  for (let i = 0; i < LED_PIXELS; i++) {
    pixels.push(data.slice(i * 6, i * 6 + 6).toUpperCase());
  }
  return pixels;
}
