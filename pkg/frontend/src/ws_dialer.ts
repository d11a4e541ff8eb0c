/**
 * WebSocket-backed dialer for browser hosts.
 *
 * Browsers cannot open raw TCP sockets, so point this at any
 * byte-transparent TCP gateway in front of the bridge, e.g.
 *
 *   websocat --binary ws-l:127.0.0.1:8356 tcp:127.0.0.1:8355
 *
 * Chunking does not matter: the line codec reassembles frames.
 */

import type { Dialer, WireSocket } from "./transport";

export const webSocketDialer: Dialer = (host, port, onOpen): WireSocket => {
  const ws = new WebSocket(`ws://${host}:${port}`);
  ws.binaryType = "arraybuffer";
  const decoder = new TextDecoder();
  ws.onopen = () => onOpen();
  return {
    write: (data) => {
      if (ws.readyState === WebSocket.OPEN) ws.send(data);
    },
    end: () => ws.close(),
    onData: (cb) => {
      ws.onmessage = (ev) => {
        const raw = ev.data;
        cb(typeof raw === "string" ? raw : decoder.decode(raw));
      };
    },
    onClose: (cb) => {
      ws.onclose = () => cb();
    },
    onError: (cb) => {
      ws.onerror = () => cb(new Error("websocket error"));
    },
  };
};
