// Script 19: vegetation monitoring
var region = ee.Geometry.Polygon([[[30.1, -1.9], [30.4, -1.9], [30.4, -1.6], [30.1, -1.6]]]);
var roiGeom = region;
function maskClouds(image) {
  var qa = image.select('QA_PIXEL');
  var mask = qa.bitwiseAnd(1 << 3).eq(0).and(qa.bitwiseAnd(1 << 4).eq(0));
  return image.updateMask(mask).multiply(0.0000275).add(-0.2);
}
var collection = ee.ImageCollection('LANDSAT/LC09/C02/T1_L2')
  .filterDate('2022-01-01', '2022-12-31')
  .filterBounds(region)
  .map(maskClouds);
var composite = collection.median().clip(region);
composite = composite.select(['SR_B5', 'SR_B4', 'SR_B3']);
var ndvi = composite.normalizedDifference(['SR_B5', 'SR_B4']).rename('NDVI');
composite = composite.addBands(ndvi);
var vegetation = ndvi.gt(0.22).selfMask();
var water = ndvi.lt(0).where(ndvi.lt(-0.2), 2);
var vectors = vegetation.toInt().reduceToVectors({geometry: region, scale: 30, maxPixels: 1e10});
var smoothed = ndvi.focal_mean(2, 'square', 'pixels');
var kernel = ee.Kernel.gaussian(3);
var filtered = smoothed.convolve(kernel);
Map.centerObject(region, 9);
Map.addLayer(ndvi, {min: -1, max: 1, palette: ['blue', 'white', 'green']}, 'NDVI');
Export.image.toAsset({image: ndvi, description: 'ndvi_2022_19', assetId: 'users/demo/ndvi_2022_19', region: region, scale: 30});
