// Script 11: crop assessment
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
var samples = ee.FeatureCollection('users/demo/samples');
var ndvi = composite.normalizedDifference(['SR_B5', 'SR_B4']).rename('NDVI');
composite = composite.addBands(ndvi);
var vegetation = ndvi.gt(0.38).selfMask();
var water = ndvi.lt(0).where(ndvi.lt(-0.2), 2);
var meanNdvi = ndvi.reduceRegion({reducer: ee.Reducer.mean(), geometry: roi, scale: 30});
print('Mean NDVI', meanNdvi);
var areaImage = vegetation.multiply(ee.Image.pixelArea()).divide(1e6);
var stats = areaImage.reduceRegion({reducer: ee.Reducer.sum(), geometry: roi, scale: 30, maxPixels: 1e13});
print('Vegetated area (km2)', stats.get('NDVI'));
