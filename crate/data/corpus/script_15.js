// Script 15: water extraction
var region = ee.Geometry.Polygon([[[30.1, -1.9], [30.4, -1.9], [30.4, -1.6], [30.1, -1.6]]]);
var roiGeom = region;
function maskClouds(image) {
  var qa = image.select('QA_PIXEL');
  var mask = qa.bitwiseAnd(1 << 3).eq(0).and(qa.bitwiseAnd(1 << 4).eq(0));
  return image.updateMask(mask).multiply(0.0000275).add(-0.2);
}
var collection = ee.ImageCollection('LANDSAT/LC08/C02/T1_L2')
  .filterDate('2018-01-01', '2018-12-31')
  .filterBounds(region)
  .map(maskClouds);
var composite = collection.mosaic().clip(region);
composite = composite.select(['SR_B5', 'SR_B4', 'SR_B3']);
var ndvi = composite.normalizedDifference(['SR_B5', 'SR_B4']).rename('NDVI');
composite = composite.addBands(ndvi);
var samples = ee.FeatureCollection('users/demo/samples');
var vegetation = ndvi.gt(0.38).selfMask();
var water = ndvi.lt(0).where(ndvi.lt(-0.2), 2);
var patches = vegetation.connectedComponents(ee.Kernel.plus(1), 128);
var patchSize = vegetation.connectedPixelCount(128, true);
Map.centerObject(region, 9);
Map.addLayer(ndvi, {min: -1, max: 1, palette: ['blue', 'white', 'green']}, 'NDVI');
var centers = ee.FeatureCollection('users/demo/stations');
var zones = centers.map(function(f) { return f.buffer(1000); });
var dist = vegetation.fastDistanceTransform(64).sqrt();
var training = composite.sampleRegions({collection: samples, properties: ['landcover'], scale: 30});
var split = training.randomColumn('random');
var trainSet = split.filter(ee.Filter.lt('random', 0.7));
var classifier = ee.Classifier.smileRandomForest(50).train(trainSet, 'landcover', ['SR_B5', 'SR_B4', 'SR_B3', 'NDVI']);
var classified = composite.classify(classifier);
var accuracy = trainSet.classify(classifier).errorMatrix('landcover', 'classification');
print('Accuracy', accuracy.accuracy());
var sample = composite.sample({region: region, scale: 30, numPixels: 5000});
var clusterer = ee.Clusterer.wekaKMeans(5).train(sample);
var clusters = composite.cluster(clusterer);
Export.image.toDrive({image: ndvi, description: 'ndvi_2018_15', region: region, scale: 30, maxPixels: 1e13});
