// Script 36: vegetation monitoring
var aoi = ee.Geometry.Point([-122.26, 37.87]).buffer(5000);
var roiGeom = aoi;
function maskClouds(image) {
  var qa = image.select('QA_PIXEL');
  var mask = qa.bitwiseAnd(1 << 3).eq(0).and(qa.bitwiseAnd(1 << 4).eq(0));
  return image.updateMask(mask).multiply(0.0000275).add(-0.2);
}
var collection = ee.ImageCollection('LANDSAT/LC08/C02/T1_L2')
  .filterDate('2022-01-01', '2022-12-31')
  .filterBounds(aoi)
  .map(maskClouds);
var composite = collection.mosaic().clip(aoi);
composite = composite.select(['SR_B5', 'SR_B4', 'SR_B3']);
var ndvi = composite.normalizedDifference(['SR_B5', 'SR_B4']).rename('NDVI');
composite = composite.addBands(ndvi);
var minMax = ndvi.reduceRegion({reducer: ee.Reducer.minMax(), geometry: roiGeom, scale: 100});
var scaled = ndvi.unitScale(-1, 1).toFloat();
var vegetation = ndvi.gt(0.39).selfMask();
var water = ndvi.lt(0).where(ndvi.lt(-0.2), 2);
var vectors = vegetation.toInt().reduceToVectors({geometry: aoi, scale: 30, maxPixels: 1e10});
var sample = composite.sample({region: aoi, scale: 30, numPixels: 5000});
var clusterer = ee.Clusterer.wekaKMeans(5).train(sample);
var clusters = composite.cluster(clusterer);
Export.image.toAsset({image: ndvi, description: 'ndvi_2022_36', assetId: 'users/demo/ndvi_2022_36', region: aoi, scale: 30});
