var col = ee.ImageCollection('LANDSAT/LC08/C02/T1_L2').map(function(image) {
  var ndvi = image.normalizedDifference(['B5', 'B4']);
  return image.addBands(ndvi);
});
