function feature(board) {
  // 1 when it is White's turn to move, else 0.
  return board.turn === "w" ? 1 : 0;
}
