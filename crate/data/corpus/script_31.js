// Script 31: vegetation monitoring
var roi = ee.Geometry.Rectangle([116.2, 39.7, 116.6, 40.1]);
var roiGeom = roi;
function maskClouds(image) {
  var qa = image.select('QA_PIXEL');
  var mask = qa.bitwiseAnd(1 << 3).eq(0).and(qa.bitwiseAnd(1 << 4).eq(0));
  return image.updateMask(mask).multiply(0.0000275).add(-0.2);
}
var collection = ee.ImageCollection('LANDSAT/LC08/C02/T1_L2')
  .filterDate('2021-01-01', '2021-12-31')
  .filterBounds(roi)
  .map(maskClouds);
var composite = collection.median().clip(roi);
composite = composite.select(['SR_B5', 'SR_B4', 'SR_B3']);
var ndvi = composite.normalizedDifference(['SR_B5', 'SR_B4']).rename('NDVI');
composite = composite.addBands(ndvi);
var smoothed = ndvi.focal_mean(2, 'square', 'pixels');
var kernel = ee.Kernel.gaussian(3);
var filtered = smoothed.convolve(kernel);
var meanNdvi = ndvi.reduceRegion({reducer: ee.Reducer.mean(), geometry: roi, scale: 30});
print('Mean NDVI', meanNdvi);
var vegetation = ndvi.gt(0.39).selfMask();
var water = ndvi.lt(0).where(ndvi.lt(-0.2), 2);
var minMax = ndvi.reduceRegion({reducer: ee.Reducer.minMax(), geometry: roiGeom, scale: 100});
var scaled = ndvi.unitScale(-1, 1).toFloat();
var vectors = vegetation.toInt().reduceToVectors({geometry: roi, scale: 30, maxPixels: 1e10});
