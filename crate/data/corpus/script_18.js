// Script 18: vegetation monitoring
var region = ee.Geometry.Polygon([[[30.1, -1.9], [30.4, -1.9], [30.4, -1.6], [30.1, -1.6]]]);
var roiGeom = region;
function maskClouds(image) {
  var qa = image.select('QA_PIXEL');
  var mask = qa.bitwiseAnd(1 << 3).eq(0).and(qa.bitwiseAnd(1 << 4).eq(0));
  return image.updateMask(mask).multiply(0.0000275).add(-0.2);
}
var collection = ee.ImageCollection('LANDSAT/LC09/C02/T1_L2')
  .filterDate('2021-01-01', '2021-12-31')
  .filterBounds(region)
  .map(maskClouds);
var composite = collection.median().clip(region);
composite = composite.select(['SR_B5', 'SR_B4', 'SR_B3']);
var ndvi = composite.normalizedDifference(['SR_B5', 'SR_B4']).rename('NDVI');
composite = composite.addBands(ndvi);
var minMax = ndvi.reduceRegion({reducer: ee.Reducer.minMax(), geometry: roiGeom, scale: 100});
var scaled = ndvi.unitScale(-1, 1).toFloat();
var chart = ui.Chart.image.series(collection.select('NDVI'), region, ee.Reducer.mean(), 30);
chart.setOptions({title: 'NDVI time series'});
print(chart);
var coarse = ndvi.reproject({crs: 'EPSG:4326', scale: 250});
var aggregated = coarse.reduceResolution({reducer: ee.Reducer.mean(), maxPixels: 1024});
var meanNdvi = ndvi.reduceRegion({reducer: ee.Reducer.mean(), geometry: region, scale: 30});
print('Mean NDVI', meanNdvi);
