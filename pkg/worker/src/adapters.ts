// Payload decoding: turn the wire form of an example into the object handed
// to a feature function. Decoding is fresh per call, so features can never
// observe each other's mutations.

import { Board, parseFen } from "./chess";

export const ADAPTERS = ["chess", "text", "image", "tabular"] as const;
export type Adapter = (typeof ADAPTERS)[number];

export interface Image {
  width: number;
  height: number;
  pixels: number[];
  at(row: number, col: number): number;
}

export function decodePayload(adapter: Adapter, raw: unknown): Board | string | Image | Record<string, number> {
  switch (adapter) {
    case "chess": {
      if (typeof raw !== "string") throw new Error("chess payload must be a FEN string");
      return parseFen(raw);
    }
    case "text": {
      if (typeof raw !== "string") throw new Error("text payload must be a string");
      return raw;
    }
    case "image": {
      const obj = raw as { width?: unknown; pixels?: unknown };
      if (!obj || typeof obj.width !== "number" || !Array.isArray(obj.pixels)) {
        throw new Error("image payload must be {width, pixels}");
      }
      const width = obj.width;
      const pixels = obj.pixels.map((p) => {
        if (typeof p !== "number") throw new Error("image intensities must be numbers");
        return p;
      });
      if (width < 1 || pixels.length % width !== 0) {
        throw new Error("pixels do not form rows of the given width");
      }
      return {
        width,
        height: pixels.length / width,
        pixels,
        at: (row: number, col: number) => pixels[row * width + col],
      };
    }
    case "tabular": {
      if (!raw || typeof raw !== "object" || Array.isArray(raw)) {
        throw new Error("tabular payload must be an object of numeric fields");
      }
      return { ...(raw as Record<string, number>) };
    }
  }
}
