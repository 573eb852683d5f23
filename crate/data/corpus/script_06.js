// Script 06: urban expansion
var aoi = ee.Geometry.Point([-122.26, 37.87]).buffer(5000);
var roiGeom = aoi;
function maskClouds(image) {
  var qa = image.select('QA_PIXEL');
  var mask = qa.bitwiseAnd(1 << 3).eq(0).and(qa.bitwiseAnd(1 << 4).eq(0));
  return image.updateMask(mask).multiply(0.0000275).add(-0.2);
}
var collection = ee.ImageCollection('LANDSAT/LC08/C02/T1_L2')
  .filterDate('2018-01-01', '2018-12-31')
  .filterBounds(aoi)
  .map(maskClouds);
var composite = collection.median().clip(aoi);
composite = composite.select(['SR_B5', 'SR_B4', 'SR_B3']);
var ndvi = composite.normalizedDifference(['SR_B5', 'SR_B4']).rename('NDVI');
composite = composite.addBands(ndvi);
var smoothed = ndvi.focal_mean(2, 'square', 'pixels');
var kernel = ee.Kernel.gaussian(3);
var filtered = smoothed.convolve(kernel);
var coarse = ndvi.reproject({crs: 'EPSG:4326', scale: 250});
var aggregated = coarse.reduceResolution({reducer: ee.Reducer.mean(), maxPixels: 1024});
var chart = ui.Chart.image.series(collection.select('NDVI'), aoi, ee.Reducer.mean(), 30);
chart.setOptions({title: 'NDVI time series'});
print(chart);
Export.image.toAsset({image: ndvi, description: 'ndvi_2018_06', assetId: 'users/demo/ndvi_2018_06', region: aoi, scale: 30});
