// Script 04: crop assessment
var basin = ee.FeatureCollection('users/demo/basin').geometry();
var roiGeom = basin;
function maskClouds(image) {
  var qa = image.select('QA_PIXEL');
  var mask = qa.bitwiseAnd(1 << 3).eq(0).and(qa.bitwiseAnd(1 << 4).eq(0));
  return image.updateMask(mask).multiply(0.0000275).add(-0.2);
}
var collection = ee.ImageCollection('LANDSAT/LC08/C02/T1_L2')
  .filterDate('2020-01-01', '2020-12-31')
  .filterBounds(basin)
  .map(maskClouds);
var composite = collection.mosaic().clip(basin);
composite = composite.select(['SR_B5', 'SR_B4', 'SR_B3']);
var ndvi = composite.normalizedDifference(['SR_B5', 'SR_B4']).rename('NDVI');
composite = composite.addBands(ndvi);
var vegetation = ndvi.gt(0.3).selfMask();
var water = ndvi.lt(0).where(ndvi.lt(-0.2), 2);
Map.centerObject(basin, 9);
Map.addLayer(ndvi, {min: -1, max: 1, palette: ['blue', 'white', 'green']}, 'NDVI');
var vectors = vegetation.toInt().reduceToVectors({geometry: basin, scale: 30, maxPixels: 1e10});
Export.image.toDrive({image: ndvi, description: 'ndvi_2020_04', region: basin, scale: 30, maxPixels: 1e13});
