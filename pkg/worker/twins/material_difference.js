function feature(board) {
  // Material difference: weighted piece sum, White minus Black
  // (pawn 1, knight 3, bishop 3, rook 5, queen 9).
  var values = { p: 1, n: 3, b: 3, r: 5, q: 9, k: 0 };
  var score = 0;
  var pieces = board.pieces();
  for (var i = 0; i < pieces.length; i++) {
    var p = pieces[i];
    score += p.color === "w" ? values[p.type] : -values[p.type];
  }
  return score;
}
