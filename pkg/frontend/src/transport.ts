/**
 * Line-delimited JSON framing over a pluggable byte stream.
 *
 * The session code never touches sockets directly; it talks to a
 * WireSocket produced by a Dialer. Tests and the Node entry point use
 * the TCP dialer, a browser host supplies one backed by whatever
 * gateway it has (see ws_dialer.ts).
 */

export interface WireSocket {
  write(data: string): void;
  end(): void;
  onData(cb: (chunk: string) => void): void;
  onClose(cb: () => void): void;
  onError(cb: (err: Error) => void): void;
}

export type Dialer = (host: string, port: number, onOpen: () => void) => WireSocket;

/** Splits a chunk stream into newline-terminated frames. */
export class LineCodec {
  private buffer = "";

  feed(chunk: string, onLine: (line: string) => void): void {
    this.buffer += chunk;
    let idx: number;
    while ((idx = this.buffer.indexOf("\n")) !== -1) {
      const line = this.buffer.slice(0, idx).trim();
      this.buffer = this.buffer.slice(idx + 1);
      if (line.length > 0) onLine(line);
    }
  }

  reset(): void {
    this.buffer = "";
  }
}

export function encode(msg: object): string {
  return JSON.stringify(msg) + "\n";
}
