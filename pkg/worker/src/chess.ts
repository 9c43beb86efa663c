// Minimal FEN board helper exposed to chess features.
// row 0 is rank 8 (the top of the FEN board field), col 0 is file a.

export interface Piece {
  type: string; // p n b r q k
  color: "w" | "b";
  row: number;
  col: number;
}

export interface Board {
  fen: string;
  turn: "w" | "b";
  pieces(): Piece[];
  at(row: number, col: number): Piece | null;
}

const PIECE_CHARS = "pnbrqk";

export function parseFen(fen: string): Board {
  const parts = fen.trim().split(/\s+/);
  const ranks = parts[0].split("/");
  if (ranks.length !== 8) {
    throw new Error(`FEN board must have 8 ranks, got ${ranks.length}`);
  }
  const grid: (Piece | null)[][] = [];
  for (let row = 0; row < 8; row++) {
    const cells: (Piece | null)[] = [];
    for (const ch of ranks[row]) {
      if (ch >= "1" && ch <= "8") {
        for (let i = 0; i < Number(ch); i++) cells.push(null);
      } else if (PIECE_CHARS.includes(ch.toLowerCase())) {
        cells.push({
          type: ch.toLowerCase(),
          color: ch === ch.toUpperCase() ? "w" : "b",
          row,
          col: cells.length,
        });
      } else {
        throw new Error(`invalid FEN character '${ch}'`);
      }
    }
    if (cells.length !== 8) {
      throw new Error(`FEN rank '${ranks[row]}' does not span 8 squares`);
    }
    grid.push(cells);
  }
  const turn = parts.length > 1 && parts[1] === "b" ? "b" : "w";
  const pieceList: Piece[] = [];
  for (const rank of grid) {
    for (const piece of rank) {
      if (piece) pieceList.push(piece);
    }
  }
  return {
    fen,
    turn,
    pieces: () => pieceList.slice(),
    at: (row: number, col: number) =>
      row >= 0 && row < 8 && col >= 0 && col < 8 ? grid[row][col] : null,
  };
}
