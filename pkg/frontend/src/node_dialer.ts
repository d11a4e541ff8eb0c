/** TCP dialer for Node hosts (and the vitest suite). */

import * as net from "node:net";

import type { Dialer, WireSocket } from "./transport";

export const tcpDialer: Dialer = (host, port, onOpen): WireSocket => {
  const sock = net.createConnection({ host, port }, onOpen);
  sock.setNoDelay(true);
  return {
    write: (data) => {
      if (!sock.destroyed) sock.write(data);
    },
    end: () => sock.destroy(),
    onData: (cb) => {
      sock.on("data", (chunk: Buffer) => cb(chunk.toString("utf8")));
    },
    onClose: (cb) => {
      sock.on("close", () => cb());
    },
    onError: (cb) => {
      sock.on("error", cb);
    },
  };
};
