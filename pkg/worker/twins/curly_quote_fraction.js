function feature(text) {
  // Curly/typographic quote characters as a fraction of all quote characters.
  var curly = 0;
  var plain = 0;
  for (var i = 0; i < text.length; i++) {
    var ch = text[i];
    if (ch === "‘" || ch === "’" || ch === "“" || ch === "”") {
      curly++;
    } else if (ch === "'" || ch === '"') {
      plain++;
    }
  }
  var total = curly + plain;
  return total === 0 ? 0 : curly / total;
}
