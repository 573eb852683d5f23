// Script 27: crop assessment
var basin = ee.FeatureCollection('users/demo/basin').geometry();
var roiGeom = basin;
function maskClouds(image) {
  var qa = image.select('QA_PIXEL');
  var mask = qa.bitwiseAnd(1 << 3).eq(0).and(qa.bitwiseAnd(1 << 4).eq(0));
  return image.updateMask(mask).multiply(0.0000275).add(-0.2);
}
var collection = ee.ImageCollection('LANDSAT/LC08/C02/T1_L2')
  .filterDate('2021-01-01', '2021-12-31')
  .filterBounds(basin)
  .map(maskClouds);
var composite = collection.mosaic().clip(basin);
composite = composite.select(['SR_B5', 'SR_B4', 'SR_B3']);
var samples = ee.FeatureCollection('users/demo/samples');
var ndvi = composite.normalizedDifference(['SR_B5', 'SR_B4']).rename('NDVI');
composite = composite.addBands(ndvi);
var vegetation = ndvi.gt(0.32).selfMask();
var water = ndvi.lt(0).where(ndvi.lt(-0.2), 2);
var patches = vegetation.connectedComponents(ee.Kernel.plus(1), 128);
var patchSize = vegetation.connectedPixelCount(128, true);
var meanNdvi = ndvi.reduceRegion({reducer: ee.Reducer.mean(), geometry: basin, scale: 30});
print('Mean NDVI', meanNdvi);
var chart = ui.Chart.image.series(collection.select('NDVI'), basin, ee.Reducer.mean(), 30);
chart.setOptions({title: 'NDVI time series'});
print(chart);
Export.image.toAsset({image: ndvi, description: 'ndvi_2021_27', assetId: 'users/demo/ndvi_2021_27', region: basin, scale: 30});
