// Script 17: water extraction
var region = ee.Geometry.Polygon([[[30.1, -1.9], [30.4, -1.9], [30.4, -1.6], [30.1, -1.6]]]);
var roiGeom = region;
function maskClouds(image) {
  var qa = image.select('QA60');
  var mask = qa.bitwiseAnd(1 << 3).eq(0).and(qa.bitwiseAnd(1 << 4).eq(0));
  return image.updateMask(mask).multiply(0.0000275).add(-0.2);
}
var collection = ee.ImageCollection('COPERNICUS/S2_SR_HARMONIZED')
  .filterDate('2019-01-01', '2019-12-31')
  .filterBounds(region)
  .map(maskClouds);
var composite = collection.mosaic().clip(region);
composite = composite.select(['B8', 'B4', 'B3']);
var ndvi = composite.normalizedDifference(['B8', 'B4']).rename('NDVI');
composite = composite.addBands(ndvi);
var vegetation = ndvi.gt(0.3).selfMask();
var water = ndvi.lt(0).where(ndvi.lt(-0.2), 2);
var centers = ee.FeatureCollection('users/demo/stations');
var zones = centers.map(function(f) { return f.buffer(1000); });
var dist = vegetation.fastDistanceTransform(64).sqrt();
var sample = composite.sample({region: region, scale: 30, numPixels: 5000});
var clusterer = ee.Clusterer.wekaKMeans(5).train(sample);
var clusters = composite.cluster(clusterer);
var coarse = ndvi.reproject({crs: 'EPSG:4326', scale: 250});
var aggregated = coarse.reduceResolution({reducer: ee.Reducer.mean(), maxPixels: 1024});
var patches = vegetation.connectedComponents(ee.Kernel.plus(1), 128);
var patchSize = vegetation.connectedPixelCount(128, true);
var smoothed = ndvi.focal_mean(2, 'square', 'pixels');
var kernel = ee.Kernel.gaussian(3);
var filtered = smoothed.convolve(kernel);
Export.image.toAsset({image: ndvi, description: 'ndvi_2019_17', assetId: 'users/demo/ndvi_2019_17', region: region, scale: 30});
