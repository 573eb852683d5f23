// Script 20: land cover mapping
var basin = ee.FeatureCollection('users/demo/basin').geometry();
var roiGeom = basin;
function maskClouds(image) {
  var qa = image.select('QA_PIXEL');
  var mask = qa.bitwiseAnd(1 << 3).eq(0).and(qa.bitwiseAnd(1 << 4).eq(0));
  return image.updateMask(mask).multiply(0.0000275).add(-0.2);
}
var collection = ee.ImageCollection('LANDSAT/LC09/C02/T1_L2')
  .filterDate('2019-01-01', '2019-12-31')
  .filterBounds(basin)
  .map(maskClouds);
var composite = collection.median().clip(basin);
composite = composite.select(['SR_B5', 'SR_B4', 'SR_B3']);
var ndvi = composite.normalizedDifference(['SR_B5', 'SR_B4']).rename('NDVI');
composite = composite.addBands(ndvi);
var samples = ee.FeatureCollection('users/demo/samples');
var vegetation = ndvi.gt(0.42).selfMask();
var water = ndvi.lt(0).where(ndvi.lt(-0.2), 2);
var training = composite.sampleRegions({collection: samples, properties: ['landcover'], scale: 30});
var split = training.randomColumn('random');
var trainSet = split.filter(ee.Filter.lt('random', 0.7));
var classifier = ee.Classifier.smileRandomForest(50).train(trainSet, 'landcover', ['SR_B5', 'SR_B4', 'SR_B3', 'NDVI']);
var classified = composite.classify(classifier);
var accuracy = trainSet.classify(classifier).errorMatrix('landcover', 'classification');
print('Accuracy', accuracy.accuracy());
var vectors = vegetation.toInt().reduceToVectors({geometry: basin, scale: 30, maxPixels: 1e10});
