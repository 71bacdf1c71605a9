// Reconnecting telemetry client. Commands resolve on their engine ack
// (FIFO order: the server acks each command on the issuing socket, in
// order) or reject after a timeout, leaving the UI state untouched.

import { Ack, ControlCommand, isAck, parseTelemetry } from "./protocol.js";
import {
  UiState,
  applyMessage,
  commitAckedValue,
  initialState,
  setConnection,
} from "./state.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientOptions {
  url: string;
  socketFactory?: SocketFactory;
  commandTimeoutMs?: number;
  baseBackoffMs?: number;
  maxBackoffMs?: number;
  windowS?: number;
  onChange?: (state: UiState) => void;
}

interface PendingCommand {
  command: ControlCommand;
  resolve: (ack: Ack) => void;
  reject: (err: Error) => void;
  timer: ReturnType<typeof setTimeout>;
}

export class DashboardClient {
  state: UiState;
  private readonly url: string;
  private readonly factory: SocketFactory;
  private readonly commandTimeoutMs: number;
  private readonly baseBackoffMs: number;
  private readonly maxBackoffMs: number;
  private readonly onChange?: (state: UiState) => void;
  private socket: SocketLike | null = null;
  private pending: PendingCommand[] = [];
  private attempts = 0;
  private closed = false;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(options: ClientOptions) {
    this.url = options.url;
    this.factory = options.socketFactory ?? ((url) => new WebSocket(url) as unknown as SocketLike);
    this.commandTimeoutMs = options.commandTimeoutMs ?? 3000;
    this.baseBackoffMs = options.baseBackoffMs ?? 500;
    this.maxBackoffMs = options.maxBackoffMs ?? 10_000;
    this.onChange = options.onChange;
    this.state = initialState(options.windowS ?? 60);
  }

  connect(): void {
    if (this.closed) return;
    this.update(setConnection(this.state, "connecting"));
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.attempts = 0;
      this.update(setConnection(this.state, "open"));
    };
    socket.onclose = () => {
      this.dropSocket();
      this.scheduleReconnect();
    };
    socket.onmessage = (ev) => this.handleFrame(ev.data);
  }

  close(): void {
    this.closed = true;
    if (this.reconnectTimer !== null) clearTimeout(this.reconnectTimer);
    this.failAllPending(new Error("client closed"));
    this.socket?.close();
    this.socket = null;
  }

  get backoffMs(): number {
    return Math.min(this.baseBackoffMs * 2 ** Math.max(0, this.attempts - 1), this.maxBackoffMs);
  }

  sendControl(command: ControlCommand): Promise<Ack> {
    if (this.socket === null || this.state.connection !== "open") {
      return Promise.reject(new Error("not connected"));
    }
    return new Promise<Ack>((resolve, reject) => {
      const entry: PendingCommand = {
        command,
        resolve,
        reject,
        timer: setTimeout(() => {
          this.pending = this.pending.filter((p) => p !== entry);
          reject(new Error(`command ${command.cmd} timed out`));
        }, this.commandTimeoutMs),
      };
      this.pending.push(entry);
      this.socket!.send(JSON.stringify(command));
    });
  }

  private handleFrame(raw: string): void {
    const msg = parseTelemetry(raw);
    if (msg === null) return;
    if (isAck(msg)) {
      const entry = this.pending.shift();
      if (entry === undefined) return;
      clearTimeout(entry.timer);
      if (msg.ok && "value" in entry.command) {
        this.update(commitAckedValue(this.state, entry.command.cmd, entry.command.value));
      }
      if (!msg.ok && msg.msg) {
        this.update({ ...this.state, lastError: msg.msg });
      }
      entry.resolve(msg);
      return;
    }
    this.update(applyMessage(this.state, msg));
  }

  private dropSocket(): void {
    this.socket = null;
    this.failAllPending(new Error("connection lost"));
    this.update(setConnection(this.state, "closed"));
  }

  private failAllPending(err: Error): void {
    for (const entry of this.pending) {
      clearTimeout(entry.timer);
      entry.reject(err);
    }
    this.pending = [];
  }

  private scheduleReconnect(): void {
    if (this.closed) return;
    this.attempts += 1;
    this.reconnectTimer = setTimeout(() => this.connect(), this.backoffMs);
  }

  private update(next: UiState): void {
    this.state = next;
    this.onChange?.(next);
  }
}
