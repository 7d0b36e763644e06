// WebSocket plumbing: join with the last applied sequence number so the
// server resends only what we missed, ack what we apply, reconnect on drop.

import { ClientEvent, parseFrame } from "./protocol";
import { ClientState, applyFrame } from "./store";

const RECONNECT_DELAY_MS = 1500;

export class Connection {
  private ws: WebSocket | null = null;
  private closed = false;

  constructor(
    private url: string,
    private st: ClientState,
    private onChange: () => void
  ) {}

  open(): void {
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.send({ type: "join", last_seq: this.st.lastSeq });
      this.st.connected = true;
      this.onChange();
    };
    ws.onmessage = (event: MessageEvent) => {
      const frame = parseFrame(String(event.data));
      if (frame === null) return;
      if (applyFrame(this.st, frame) && frame.seq > 0) {
        this.send({ type: "ack", seq: this.st.lastSeq });
      }
      this.onChange();
    };
    ws.onclose = () => {
      this.st.connected = false;
      this.onChange();
      if (!this.closed) {
        setTimeout(() => this.open(), RECONNECT_DELAY_MS);
      }
    };
  }

  send(event: ClientEvent): void {
    if (this.ws !== null && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(JSON.stringify(event));
    }
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }
}
