// Script 03: crop assessment
var region = ee.Geometry.Polygon([[[30.1, -1.9], [30.4, -1.9], [30.4, -1.6], [30.1, -1.6]]]);
var roiGeom = region;
function maskClouds(image) {
  var qa = image.select('QA_PIXEL');
  var mask = qa.bitwiseAnd(1 << 3).eq(0).and(qa.bitwiseAnd(1 << 4).eq(0));
  return image.updateMask(mask).multiply(0.0000275).add(-0.2);
}
var collection = ee.ImageCollection('LANDSAT/LC08/C02/T1_L2')
  .filterDate('2021-01-01', '2021-12-31')
  .filterBounds(region)
  .map(maskClouds);
var composite = collection.mosaic().clip(region);
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
var meanNdvi = ndvi.reduceRegion({reducer: ee.Reducer.mean(), geometry: region, scale: 30});
print('Mean NDVI', meanNdvi);
Export.image.toAsset({image: ndvi, description: 'ndvi_2021_03', assetId: 'users/demo/ndvi_2021_03', region: region, scale: 30});
