// Script 08: land cover mapping
var basin = ee.FeatureCollection('users/demo/basin').geometry();
var roiGeom = basin;
function maskClouds(image) {
  var qa = image.select('QA60');
  var mask = qa.bitwiseAnd(1 << 3).eq(0).and(qa.bitwiseAnd(1 << 4).eq(0));
  return image.updateMask(mask).multiply(0.0000275).add(-0.2);
}
var collection = ee.ImageCollection('COPERNICUS/S2_SR_HARMONIZED')
  .filterDate('2021-01-01', '2021-12-31')
  .filterBounds(basin)
  .map(maskClouds);
var composite = collection.median().clip(basin);
composite = composite.select(['B8', 'B4', 'B3']);
var ndvi = composite.normalizedDifference(['B8', 'B4']).rename('NDVI');
composite = composite.addBands(ndvi);
var smoothed = ndvi.focal_mean(2, 'square', 'pixels');
var kernel = ee.Kernel.gaussian(3);
var filtered = smoothed.convolve(kernel);
var minMax = ndvi.reduceRegion({reducer: ee.Reducer.minMax(), geometry: roiGeom, scale: 100});
var scaled = ndvi.unitScale(-1, 1).toFloat();
Export.image.toAsset({image: ndvi, description: 'ndvi_2021_08', assetId: 'users/demo/ndvi_2021_08', region: basin, scale: 30});
