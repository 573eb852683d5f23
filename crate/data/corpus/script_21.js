// Script 21: urban expansion
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
var vegetation = ndvi.gt(0.36).selfMask();
var water = ndvi.lt(0).where(ndvi.lt(-0.2), 2);
var smoothed = ndvi.focal_mean(2, 'square', 'pixels');
var kernel = ee.Kernel.gaussian(3);
var filtered = smoothed.convolve(kernel);
var vectors = vegetation.toInt().reduceToVectors({geometry: aoi, scale: 30, maxPixels: 1e10});
var training = composite.sampleRegions({collection: samples, properties: ['landcover'], scale: 30});
var split = training.randomColumn('random');
var trainSet = split.filter(ee.Filter.lt('random', 0.7));
var classifier = ee.Classifier.smileRandomForest(50).train(trainSet, 'landcover', ['SR_B5', 'SR_B4', 'SR_B3', 'NDVI']);
var classified = composite.classify(classifier);
var accuracy = trainSet.classify(classifier).errorMatrix('landcover', 'classification');
print('Accuracy', accuracy.accuracy());
