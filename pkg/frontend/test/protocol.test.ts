import { describe, expect, it } from "vitest";

import {
  decode,
  encode,
  ProtocolError,
  signalMessage,
  STREAM_VERSION,
  validateServerMsg,
  validateSignal,
  zeroSignal,
} from "../src/protocol";

describe("framing", () => {
  it("round trips an object through the length prefix", () => {
    const obj = { v: STREAM_VERSION, kind: "reset" };
    expect(decode(encode(obj))).toEqual(obj);
  });

  it("counts utf-8 bytes, not code units", () => {
    const obj = { v: STREAM_VERSION, kind: "error", code: "x", detail: "éé" };
    expect(decode(encode(obj))).toEqual(obj);
  });

  it("rejects a wrong length prefix", () => {
    expect(() => decode('999:{"v":1}')).toThrow(ProtocolError);
  });

  it("rejects a missing prefix", () => {
    expect(() => decode('{"v":1}')).toThrow(ProtocolError);
  });

  it("rejects non-object payloads", () => {
    expect(() => decode("2:[]")).toThrow(ProtocolError);
  });
});

describe("server message validation", () => {
  it("accepts a well-formed frames message", () => {
    const pose = {
      root_translation: [0, 0.9, 0],
      joint_rotations: [[1, 0, 0, 0], [1, 0, 0, 0]],
    };
    const msg = validateServerMsg({
      v: STREAM_VERSION, kind: "frames", start_frame: 4,
      poses: [{ a: pose, b: pose }],
    }, 2);
    expect(msg.kind).toBe("frames");
  });

  it("rejects a version mismatch", () => {
    expect(() => validateServerMsg({ v: "r2r-stream/9", kind: "hello" }))
      .toThrow(/version-mismatch/);
  });

  it("rejects frames with the wrong joint count", () => {
    const pose = { root_translation: [0, 0, 0], joint_rotations: [[1, 0, 0, 0]] };
    expect(() => validateServerMsg({
      v: STREAM_VERSION, kind: "frames", start_frame: 0,
      poses: [{ a: pose, b: pose }],
    }, 24)).toThrow(/schema-violation/);
  });

  it("rejects unknown kinds", () => {
    expect(() => validateServerMsg({ v: STREAM_VERSION, kind: "telemetry" }))
      .toThrow(/schema-violation/);
  });
});

describe("signal messages", () => {
  it("zero signal validates and encodes", () => {
    const raw = signalMessage(0, zeroSignal());
    const obj = decode(raw);
    expect(obj.kind).toBe("signal");
    expect(obj.frame).toBe(0);
  });

  it("rejects malformed signals", () => {
    const bad = { ...zeroSignal(), head_pos: [0, 0] } as never;
    expect(() => validateSignal(bad)).toThrow(ProtocolError);
    expect(() => signalMessage(-1, zeroSignal())).toThrow(ProtocolError);
  });
});
