// Script 30: urban expansion
var roi = ee.Geometry.Rectangle([116.2, 39.7, 116.6, 40.1]);
var roiGeom = roi;
function maskClouds(image) {
  var qa = image.select('QA_PIXEL');
  var mask = qa.bitwiseAnd(1 << 3).eq(0).and(qa.bitwiseAnd(1 << 4).eq(0));
  return image.updateMask(mask).multiply(0.0000275).add(-0.2);
}
var collection = ee.ImageCollection('LANDSAT/LC09/C02/T1_L2')
  .filterDate('2019-01-01', '2019-12-31')
  .filterBounds(roi)
  .map(maskClouds);
var composite = collection.median().clip(roi);
composite = composite.select(['SR_B5', 'SR_B4', 'SR_B3']);
var samples = ee.FeatureCollection('users/demo/samples');
var ndvi = composite.normalizedDifference(['SR_B5', 'SR_B4']).rename('NDVI');
composite = composite.addBands(ndvi);
var vegetation = ndvi.gt(0.29).selfMask();
var water = ndvi.lt(0).where(ndvi.lt(-0.2), 2);
var areaImage = vegetation.multiply(ee.Image.pixelArea()).divide(1e6);
var stats = areaImage.reduceRegion({reducer: ee.Reducer.sum(), geometry: roi, scale: 30, maxPixels: 1e13});
print('Vegetated area (km2)', stats.get('NDVI'));
var vectors = vegetation.toInt().reduceToVectors({geometry: roi, scale: 30, maxPixels: 1e10});
var coarse = ndvi.reproject({crs: 'EPSG:4326', scale: 250});
var aggregated = coarse.reduceResolution({reducer: ee.Reducer.mean(), maxPixels: 1024});
var chart = ui.Chart.image.series(collection.select('NDVI'), roi, ee.Reducer.mean(), 30);
chart.setOptions({title: 'NDVI time series'});
print(chart);
var training = composite.sampleRegions({collection: samples, properties: ['landcover'], scale: 30});
var split = training.randomColumn('random');
var trainSet = split.filter(ee.Filter.lt('random', 0.7));
var classifier = ee.Classifier.smileRandomForest(50).train(trainSet, 'landcover', ['SR_B5', 'SR_B4', 'SR_B3', 'NDVI']);
var classified = composite.classify(classifier);
var accuracy = trainSet.classify(classifier).errorMatrix('landcover', 'classification');
print('Accuracy', accuracy.accuracy());
Export.image.toDrive({image: ndvi, description: 'ndvi_2019_30', region: roi, scale: 30, maxPixels: 1e13});
