/**
 * Websocket session: handshake, snapshot fetch, frame subscription,
 * auto-reconnect. The viewer holds no simulation state, so dropping
 * and reopening the connection never changes anything server-side;
 * every (re)connect just replays hello + snapshot.
 *
 * Frames apply latest-wins: an older index than one already seen is
 * dropped (the server never reorders, but reconnects restart delivery).
 */

import {
  ForceMessage,
  PROTOCOL_VERSION,
  Snapshot,
  WireFrame,
  decodeSnapshot,
  encodeForce,
  helloMessage,
  parseWireFrame,
  snapshotRequest,
} from "./protocol.js";

/** The part of the WebSocket API the connection uses (injectable). */
export interface SocketLike {
  binaryType: string;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  send(data: string): void;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export type ConnectionStatus = "connecting" | "live" | "closed" | "error";

export interface ConnectionEvents {
  onStatus?: (status: ConnectionStatus, detail?: string) => void;
  onHello?: (hello: { payloadKind: string; vertexCount: number; splatCount?: number }) => void;
  onSnapshot?: (snapshot: Snapshot) => void;
  onFrame?: (frame: WireFrame) => void;
  onAck?: (ack: { simTime: number; voxel: number }) => void;
  onMiss?: () => void;
  onServerError?: (message: string) => void;
}

const RECONNECT_DELAY_MS = 1000;

export class Connection {
  private socket: SocketLike | null = null;
  private lastFrameIndex = -1;
  private closedByUser = false;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly url: string,
    private readonly events: ConnectionEvents,
    private readonly makeSocket: SocketFactory = (u) => new WebSocket(u) as unknown as SocketLike,
    private readonly autoReconnect = true,
  ) {}

  connect(): void {
    this.closedByUser = false;
    this.events.onStatus?.("connecting");
    const socket = this.makeSocket(this.url);
    this.socket = socket;
    socket.binaryType = "arraybuffer";
    socket.onopen = () => {
      // a fresh session each time: handshake, then ask for the scene
      this.lastFrameIndex = -1;
      socket.send(helloMessage());
      socket.send(snapshotRequest());
    };
    socket.onmessage = (ev) => this.handleMessage(ev.data);
    socket.onclose = () => {
      this.events.onStatus?.("closed");
      this.scheduleReconnect();
    };
    socket.onerror = () => {
      this.events.onStatus?.("error", "socket error");
    };
  }

  close(): void {
    this.closedByUser = true;
    if (this.reconnectTimer !== null) clearTimeout(this.reconnectTimer);
    this.socket?.close();
    this.socket = null;
  }

  sendForce(msg: ForceMessage): void {
    if (!this.socket) throw new Error("not connected");
    this.socket.send(encodeForce(msg));
  }

  private scheduleReconnect(): void {
    if (this.closedByUser || !this.autoReconnect) return;
    if (this.reconnectTimer !== null) return;
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      this.connect();
    }, RECONNECT_DELAY_MS);
  }

  private handleMessage(data: unknown): void {
    if (typeof data === "string") {
      let msg: any;
      try {
        msg = JSON.parse(data);
      } catch {
        this.events.onServerError?.("unparseable server message");
        return;
      }
      switch (msg.type) {
        case "hello":
          if (msg.version !== PROTOCOL_VERSION) {
            this.events.onServerError?.(`server speaks protocol v${msg.version}`);
            this.close();
            return;
          }
          this.events.onStatus?.("live");
          this.events.onHello?.({
            payloadKind: msg.payload_kind,
            vertexCount: msg.vertex_count,
            splatCount: msg.splat_count,
          });
          break;
        case "snapshot":
          this.events.onSnapshot?.(decodeSnapshot(msg.snapshot));
          break;
        case "force_ack":
          this.events.onAck?.({ simTime: msg.sim_time, voxel: msg.voxel });
          break;
        case "miss":
          this.events.onMiss?.();
          break;
        case "error":
          this.events.onServerError?.(msg.message);
          break;
        default:
          this.events.onServerError?.(`unknown message type ${msg.type}`);
      }
      return;
    }
    // binary: one wire frame, latest wins
    const frame = parseWireFrame(data as ArrayBuffer);
    if (frame.index <= this.lastFrameIndex) return;
    this.lastFrameIndex = frame.index;
    this.events.onFrame?.(frame);
  }
}
