/**
 * Connection behavior with a scripted fake socket: handshake replay on
 * reconnect, statelessness (the client never sends anything that could
 * mutate the simulation on its own), and latest-wins frame handling.
 */

import { describe, expect, it } from "vitest";

import { Connection, SocketLike } from "../src/connection.js";
import { HEADER_BYTES, TIMINGS_BYTES, WireFrame } from "../src/protocol.js";

class FakeSocket implements SocketLike {
  binaryType = "blob";
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  sent: string[] = [];
  closed = false;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  // test helpers
  open(): void {
    this.onopen?.();
  }

  receive(data: unknown): void {
    this.onmessage?.({ data });
  }
}

function frameBlob(index: number, simTime: number, vertexCount = 2): ArrayBuffer {
  const buf = new ArrayBuffer(HEADER_BYTES + TIMINGS_BYTES + vertexCount * 12);
  const view = new DataView(buf);
  view.setUint32(0, 0x46545053, true); // SPTF
  view.setUint8(4, 0);
  view.setUint32(8, index, true);
  view.setFloat32(12, simTime, true);
  return buf;
}

function makePair(events: Parameters<typeof Connection.prototype.constructor>[1] = {}) {
  const sockets: FakeSocket[] = [];
  const conn = new Connection(
    "ws://test/ws",
    events as any,
    () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    },
    false, // no reconnect timers inside tests; reconnect is driven manually
  );
  return { conn, sockets };
}

describe("handshake", () => {
  it("sends exactly hello then snapshot on open", () => {
    const { conn, sockets } = makePair();
    conn.connect();
    sockets[0].open();
    expect(sockets[0].sent.map((s) => JSON.parse(s).type)).toEqual(["hello", "snapshot"]);
    expect(JSON.parse(sockets[0].sent[0]).version).toBe(1);
  });

  it("reconnect replays the same stateless handshake and nothing else", () => {
    const { conn, sockets } = makePair();
    conn.connect();
    sockets[0].open();
    sockets[0].receive(JSON.stringify({ type: "hello", version: 1, payload_kind: "vertices", vertex_count: 2 }));
    conn.sendForce({ voxel: 1, force: [1, 0, 0], duration: 0.25 });
    expect(sockets[0].sent.length).toBe(3);

    conn.close();
    conn.connect(); // manual reconnect (same as the auto path)
    sockets[1].open();
    // no force replay, no state carry-over: just hello + snapshot again
    expect(sockets[1].sent.map((s) => JSON.parse(s).type)).toEqual(["hello", "snapshot"]);
  });

  it("version mismatch surfaces as an error and closes", () => {
    const errors: string[] = [];
    const { conn, sockets } = makePair({ onServerError: (m: string) => errors.push(m) });
    conn.connect();
    sockets[0].open();
    sockets[0].receive(JSON.stringify({ type: "hello", version: 99 }));
    expect(errors.length).toBe(1);
    expect(sockets[0].closed).toBe(true);
  });
});

describe("frames", () => {
  it("delivers frames and applies latest-wins on stale indices", () => {
    const seen: WireFrame[] = [];
    const { conn, sockets } = makePair({ onFrame: (f: WireFrame) => seen.push(f) });
    conn.connect();
    sockets[0].open();
    sockets[0].receive(frameBlob(5, 0.5));
    sockets[0].receive(frameBlob(7, 0.7));
    sockets[0].receive(frameBlob(6, 0.6)); // stale: dropped
    sockets[0].receive(frameBlob(8, 0.8));
    expect(seen.map((f) => f.index)).toEqual([5, 7, 8]);
  });

  it("a fresh connection accepts restarting indices", () => {
    const seen: number[] = [];
    const { conn, sockets } = makePair({ onFrame: (f: WireFrame) => seen.push(f.index) });
    conn.connect();
    sockets[0].open();
    sockets[0].receive(frameBlob(100, 1.0));
    conn.close();
    conn.connect();
    sockets[1].open();
    sockets[1].receive(frameBlob(3, 0.03)); // new delivery sequence
    expect(seen).toEqual([100, 3]);
  });
});

describe("acks and misses", () => {
  it("routes force acks and misses to their handlers", () => {
    const acks: unknown[] = [];
    let misses = 0;
    const { conn, sockets } = makePair({
      onAck: (a: unknown) => acks.push(a),
      onMiss: () => misses++,
    });
    conn.connect();
    sockets[0].open();
    sockets[0].receive(JSON.stringify({ type: "force_ack", sim_time: 1.25, voxel: 4 }));
    sockets[0].receive(JSON.stringify({ type: "miss" }));
    expect(acks).toEqual([{ simTime: 1.25, voxel: 4 }]);
    expect(misses).toBe(1);
  });
});
