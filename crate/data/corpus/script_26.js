// Script 26: vegetation monitoring
var basin = ee.FeatureCollection('users/demo/basin').geometry();
var roiGeom = basin;
function maskClouds(image) {
  var qa = image.select('QA_PIXEL');
  var mask = qa.bitwiseAnd(1 << 3).eq(0).and(qa.bitwiseAnd(1 << 4).eq(0));
  return image.updateMask(mask).multiply(0.0000275).add(-0.2);
}
var collection = ee.ImageCollection('LANDSAT/LC09/C02/T1_L2')
  .filterDate('2021-01-01', '2021-12-31')
  .filterBounds(basin)
  .map(maskClouds);
var composite = collection.median().clip(basin);
composite = composite.select(['SR_B5', 'SR_B4', 'SR_B3']);
var samples = ee.FeatureCollection('users/demo/samples');
var ndvi = composite.normalizedDifference(['SR_B5', 'SR_B4']).rename('NDVI');
composite = composite.addBands(ndvi);
var training = composite.sampleRegions({collection: samples, properties: ['landcover'], scale: 30});
var split = training.randomColumn('random');
var trainSet = split.filter(ee.Filter.lt('random', 0.7));
var classifier = ee.Classifier.smileRandomForest(50).train(trainSet, 'landcover', ['SR_B5', 'SR_B4', 'SR_B3', 'NDVI']);
var classified = composite.classify(classifier);
var accuracy = trainSet.classify(classifier).errorMatrix('landcover', 'classification');
print('Accuracy', accuracy.accuracy());
var vegetation = ndvi.gt(0.23).selfMask();
var water = ndvi.lt(0).where(ndvi.lt(-0.2), 2);
var vectors = vegetation.toInt().reduceToVectors({geometry: basin, scale: 30, maxPixels: 1e10});
var meanNdvi = ndvi.reduceRegion({reducer: ee.Reducer.mean(), geometry: basin, scale: 30});
print('Mean NDVI', meanNdvi);
Export.image.toDrive({image: ndvi, description: 'ndvi_2021_26', region: basin, scale: 30, maxPixels: 1e13});
