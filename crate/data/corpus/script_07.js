// Script 07: land cover mapping
var aoi = ee.Geometry.Point([-122.26, 37.87]).buffer(5000);
var roiGeom = aoi;
function maskClouds(image) {
  var qa = image.select('QA_PIXEL');
  var mask = qa.bitwiseAnd(1 << 3).eq(0).and(qa.bitwiseAnd(1 << 4).eq(0));
  return image.updateMask(mask).multiply(0.0000275).add(-0.2);
}
var collection = ee.ImageCollection('LANDSAT/LC09/C02/T1_L2')
  .filterDate('2022-01-01', '2022-12-31')
  .filterBounds(aoi)
  .map(maskClouds);
var composite = collection.median().clip(aoi);
composite = composite.select(['SR_B5', 'SR_B4', 'SR_B3']);
var samples = ee.FeatureCollection('users/demo/samples');
var ndvi = composite.normalizedDifference(['SR_B5', 'SR_B4']).rename('NDVI');
composite = composite.addBands(ndvi);
var meanNdvi = ndvi.reduceRegion({reducer: ee.Reducer.mean(), geometry: aoi, scale: 30});
print('Mean NDVI', meanNdvi);
Map.centerObject(aoi, 9);
Map.addLayer(ndvi, {min: -1, max: 1, palette: ['blue', 'white', 'green']}, 'NDVI');
var chart = ui.Chart.image.series(collection.select('NDVI'), aoi, ee.Reducer.mean(), 30);
chart.setOptions({title: 'NDVI time series'});
print(chart);
var minMax = ndvi.reduceRegion({reducer: ee.Reducer.minMax(), geometry: roiGeom, scale: 100});
var scaled = ndvi.unitScale(-1, 1).toFloat();
Export.image.toAsset({image: ndvi, description: 'ndvi_2022_07', assetId: 'users/demo/ndvi_2022_07', region: aoi, scale: 30});
