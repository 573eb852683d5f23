var img = ee.Image('LANDSAT/LC08/C02/T1_TOA/LC08_044034_20140318').select('B4');
