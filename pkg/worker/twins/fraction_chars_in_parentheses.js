function feature(text) {
  // Share of characters strictly inside matched parentheses; the delimiters
  // themselves never count and unmatched parentheses contribute nothing.
  if (text.length === 0) return 0;
  var inside = new Array(text.length).fill(false);
  var stack = [];
  for (var i = 0; i < text.length; i++) {
    var ch = text[i];
    if (ch === "(") {
      stack.push(i);
    } else if (ch === ")" && stack.length > 0) {
      var start = stack.pop();
      for (var j = start + 1; j < i; j++) inside[j] = true;
    }
  }
  var count = 0;
  for (var k = 0; k < text.length; k++) {
    if (inside[k] && text[k] !== "(" && text[k] !== ")") count++;
  }
  return count / text.length;
}
