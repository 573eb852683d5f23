// Script 01: crop assessment
var roi = ee.Geometry.Rectangle([116.2, 39.7, 116.6, 40.1]);
var roiGeom = roi;
function maskClouds(image) {
  var qa = image.select('QA60');
  var mask = qa.bitwiseAnd(1 << 3).eq(0).and(qa.bitwiseAnd(1 << 4).eq(0));
  return image.updateMask(mask).multiply(0.0000275).add(-0.2);
}
var collection = ee.ImageCollection('COPERNICUS/S2_SR_HARMONIZED')
  .filterDate('2021-01-01', '2021-12-31')
  .filterBounds(roi)
  .map(maskClouds);
var composite = collection.median().clip(roi);
composite = composite.select(['B8', 'B4', 'B3']);
var samples = ee.FeatureCollection('users/demo/samples');
var ndvi = composite.normalizedDifference(['B8', 'B4']).rename('NDVI');
composite = composite.addBands(ndvi);
var sample = composite.sample({region: roi, scale: 30, numPixels: 5000});
var clusterer = ee.Clusterer.wekaKMeans(5).train(sample);
var clusters = composite.cluster(clusterer);
Map.centerObject(roi, 9);
Map.addLayer(ndvi, {min: -1, max: 1, palette: ['blue', 'white', 'green']}, 'NDVI');
var meanNdvi = ndvi.reduceRegion({reducer: ee.Reducer.mean(), geometry: roi, scale: 30});
print('Mean NDVI', meanNdvi);
var vegetation = ndvi.gt(0.35).selfMask();
var water = ndvi.lt(0).where(ndvi.lt(-0.2), 2);
var centers = ee.FeatureCollection('users/demo/stations');
var zones = centers.map(function(f) { return f.buffer(1000); });
var dist = vegetation.fastDistanceTransform(64).sqrt();
Export.image.toAsset({image: ndvi, description: 'ndvi_2021_01', assetId: 'users/demo/ndvi_2021_01', region: roi, scale: 30});
