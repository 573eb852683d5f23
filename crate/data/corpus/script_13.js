// Script 13: vegetation monitoring
var aoi = ee.Geometry.Point([-122.26, 37.87]).buffer(5000);
var roiGeom = aoi;
function maskClouds(image) {
  var qa = image.select('QA60');
  var mask = qa.bitwiseAnd(1 << 3).eq(0).and(qa.bitwiseAnd(1 << 4).eq(0));
  return image.updateMask(mask).multiply(0.0000275).add(-0.2);
}
var collection = ee.ImageCollection('COPERNICUS/S2_SR_HARMONIZED')
  .filterDate('2022-01-01', '2022-12-31')
  .filterBounds(aoi)
  .map(maskClouds);
var composite = collection.median().clip(aoi);
composite = composite.select(['B8', 'B4', 'B3']);
var samples = ee.FeatureCollection('users/demo/samples');
var ndvi = composite.normalizedDifference(['B8', 'B4']).rename('NDVI');
composite = composite.addBands(ndvi);
var vegetation = ndvi.gt(0.42).selfMask();
var water = ndvi.lt(0).where(ndvi.lt(-0.2), 2);
var areaImage = vegetation.multiply(ee.Image.pixelArea()).divide(1e6);
var stats = areaImage.reduceRegion({reducer: ee.Reducer.sum(), geometry: aoi, scale: 30, maxPixels: 1e13});
print('Vegetated area (km2)', stats.get('NDVI'));
var sample = composite.sample({region: aoi, scale: 30, numPixels: 5000});
var clusterer = ee.Clusterer.wekaKMeans(5).train(sample);
var clusters = composite.cluster(clusterer);
var coarse = ndvi.reproject({crs: 'EPSG:4326', scale: 250});
var aggregated = coarse.reduceResolution({reducer: ee.Reducer.mean(), maxPixels: 1024});
var training = composite.sampleRegions({collection: samples, properties: ['landcover'], scale: 30});
var split = training.randomColumn('random');
var trainSet = split.filter(ee.Filter.lt('random', 0.7));
var classifier = ee.Classifier.smileRandomForest(50).train(trainSet, 'landcover', ['B8', 'B4', 'B3', 'NDVI']);
var classified = composite.classify(classifier);
var accuracy = trainSet.classify(classifier).errorMatrix('landcover', 'classification');
print('Accuracy', accuracy.accuracy());
