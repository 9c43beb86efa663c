function feature(image) {
  // Share of pixel intensities above 0.5.
  var count = 0;
  for (var i = 0; i < image.pixels.length; i++) {
    if (image.pixels[i] > 0.5) count++;
  }
  return count / image.pixels.length;
}
