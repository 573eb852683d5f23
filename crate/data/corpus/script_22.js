// Script 22: crop assessment
var basin = ee.FeatureCollection('users/demo/basin').geometry();
var roiGeom = basin;
function maskClouds(image) {
  var qa = image.select('QA_PIXEL');
  var mask = qa.bitwiseAnd(1 << 3).eq(0).and(qa.bitwiseAnd(1 << 4).eq(0));
  return image.updateMask(mask).multiply(0.0000275).add(-0.2);
}
var collection = ee.ImageCollection('LANDSAT/LC08/C02/T1_L2')
  .filterDate('2023-01-01', '2023-12-31')
  .filterBounds(basin)
  .map(maskClouds);
var composite = collection.median().clip(basin);
composite = composite.select(['SR_B5', 'SR_B4', 'SR_B3']);
var samples = ee.FeatureCollection('users/demo/samples');
var ndvi = composite.normalizedDifference(['SR_B5', 'SR_B4']).rename('NDVI');
composite = composite.addBands(ndvi);
var vegetation = ndvi.gt(0.43).selfMask();
var water = ndvi.lt(0).where(ndvi.lt(-0.2), 2);
var coarse = ndvi.reproject({crs: 'EPSG:4326', scale: 250});
var aggregated = coarse.reduceResolution({reducer: ee.Reducer.mean(), maxPixels: 1024});
var smoothed = ndvi.focal_mean(2, 'square', 'pixels');
var kernel = ee.Kernel.gaussian(3);
var filtered = smoothed.convolve(kernel);
var vectors = vegetation.toInt().reduceToVectors({geometry: basin, scale: 30, maxPixels: 1e10});
var meanNdvi = ndvi.reduceRegion({reducer: ee.Reducer.mean(), geometry: basin, scale: 30});
print('Mean NDVI', meanNdvi);
Export.image.toAsset({image: ndvi, description: 'ndvi_2023_22', assetId: 'users/demo/ndvi_2023_22', region: basin, scale: 30});
