// Node-side session client over the plain TCP transport.  Keeps a timestamped
// history of everything the server sent, which is what latency checks and
// log inspection work from; browser builds use WebSocket and skip this file.

import * as net from "node:net";
import { FrameDecoder, encodeFrame } from "./framing.js";
import { ClientMessage, HelloMsg, ServerMessage, SnapshotMsg, isSnapshot } from "./protocol.js";

export interface Received {
  message: ServerMessage;
  /** Date.now() at decode time. */
  at: number;
}

interface Waiter {
  from: number;
  predicate: (m: ServerMessage) => boolean;
  resolve: (r: Received) => void;
  reject: (e: Error) => void;
  timer: NodeJS.Timeout;
}

export class SessionClient {
  readonly history: Received[] = [];
  private decoder = new FrameDecoder();
  private waiters: Waiter[] = [];
  private subscribers: ((m: ServerMessage) => void)[] = [];
  private closedWith: Error | null = null;

  private constructor(private socket: net.Socket) {
    socket.on("data", (chunk) => {
      let messages: unknown[];
      try {
        messages = this.decoder.push(chunk);
      } catch (err) {
        this.fail(err as Error);
        return;
      }
      for (const raw of messages) {
        this.dispatch(raw as ServerMessage);
      }
    });
    socket.on("error", (err) => this.fail(err));
    socket.on("close", () => this.fail(new Error("connection closed")));
  }

  static connect(host: string, port: number, hello: HelloMsg): Promise<SessionClient> {
    return new Promise((resolve, reject) => {
      const socket = net.createConnection({ host, port }, () => {
        socket.off("error", reject);
        const client = new SessionClient(socket);
        client.send(hello);
        resolve(client);
      });
      socket.on("error", reject);
    });
  }

  send(message: ClientMessage): void {
    if (this.closedWith !== null) throw this.closedWith;
    this.socket.write(encodeFrame(message));
  }

  onMessage(fn: (m: ServerMessage) => void): void {
    this.subscribers.push(fn);
  }

  /** History index to pass as `from` so a wait only sees later messages. */
  mark(): number {
    return this.history.length;
  }

  waitFor(
    predicate: (m: ServerMessage) => boolean,
    opts: { from?: number; timeoutMs?: number } = {},
  ): Promise<Received> {
    const from = opts.from ?? this.history.length;
    for (let i = from; i < this.history.length; i++) {
      if (predicate(this.history[i].message)) {
        return Promise.resolve(this.history[i]);
      }
    }
    if (this.closedWith !== null) return Promise.reject(this.closedWith);
    return new Promise((resolve, reject) => {
      const waiter: Waiter = {
        from,
        predicate,
        resolve,
        reject,
        timer: setTimeout(() => {
          this.waiters = this.waiters.filter((w) => w !== waiter);
          reject(new Error("timed out waiting for message"));
        }, opts.timeoutMs ?? 5000),
      };
      this.waiters.push(waiter);
    });
  }

  /** The initial state of the session, sent by the server on connect. */
  snapshot(timeoutMs = 5000): Promise<SnapshotMsg> {
    return this.waitFor(isSnapshot, { from: 0, timeoutMs })
      .then((r) => r.message as SnapshotMsg);
  }

  close(): void {
    this.closedWith = this.closedWith ?? new Error("closed locally");
    this.socket.destroy();
  }

  private dispatch(message: ServerMessage): void {
    const received: Received = { message, at: Date.now() };
    this.history.push(received);
    for (const fn of this.subscribers) fn(message);
    const stillWaiting: Waiter[] = [];
    for (const w of this.waiters) {
      if (w.predicate(message)) {
        clearTimeout(w.timer);
        w.resolve(received);
      } else {
        stillWaiting.push(w);
      }
    }
    this.waiters = stillWaiting;
  }

  private fail(err: Error): void {
    if (this.closedWith === null) this.closedWith = err;
    const pending = this.waiters;
    this.waiters = [];
    for (const w of pending) {
      clearTimeout(w.timer);
      w.reject(err);
    }
  }
}
