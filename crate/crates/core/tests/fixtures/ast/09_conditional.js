if (cloudy) {
  img = img.updateMask(qa.bitwiseAnd(1).eq(0));
} else {
  img = img.clip(roi);
}
Map.addLayer(img, {min: 0, max: 0.3}, 'result');
