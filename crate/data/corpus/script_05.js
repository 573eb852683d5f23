// Script 05: vegetation monitoring
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
var vegetation = ndvi.gt(0.24).selfMask();
var water = ndvi.lt(0).where(ndvi.lt(-0.2), 2);
var centers = ee.FeatureCollection('users/demo/stations');
var zones = centers.map(function(f) { return f.buffer(1000); });
var dist = vegetation.fastDistanceTransform(64).sqrt();
var areaImage = vegetation.multiply(ee.Image.pixelArea()).divide(1e6);
var stats = areaImage.reduceRegion({reducer: ee.Reducer.sum(), geometry: region, scale: 30, maxPixels: 1e13});
print('Vegetated area (km2)', stats.get('NDVI'));
Export.image.toAsset({image: ndvi, description: 'ndvi_2018_05', assetId: 'users/demo/ndvi_2018_05', region: region, scale: 30});
