import json
import os
import tempfile
from io import StringIO

import pandas as pd
from django.conf import settings
from django.core.management import call_command
from django.test import SimpleTestCase
from rest_framework.test import APIClient

MODELS = settings.BASE_DIR / 'data' / 'models'


def read_model(name):
    with open(MODELS / name) as handle:
        return json.load(handle)


class CommandEndpointTests(SimpleTestCase):
    def setUp(self):
        self.client = APIClient()

    def post(self, command, model, **options):
        return self.client.post(f'/api/v0/{command}/', {'model': model, **options}, format='json')

    def test_validate(self):
        response = self.post('validate', read_model('binomial_call.json'))
        self.assertEqual(response.status_code, 200)
        body = response.json()
        self.assertEqual(body['exit_code'], 0)
        self.assertEqual(body['status'], 'ok')
        self.assertEqual(body['nodes'], 3)
        self.assertEqual(body['command'], 'validate')
        self.assertEqual(len(body['model_digest']), 64)
        self.assertEqual(body['version'], settings.RISKHEDGE_VERSION)

    def test_validate_without_payoff(self):
        body = self.post('validate', read_model('deterministic.json')).json()
        self.assertEqual(body['status'], 'ok, no payoff')
        self.assertFalse(body['payoff'])

    def test_check_na(self):
        body = self.post('check-na', read_model('binomial_call.json')).json()
        self.assertEqual(body['exit_code'], 0)
        self.assertTrue(body['na'])
        self.assertEqual(body['verdicts'][0]['kernel'], [0.333333333333, 0.666666666667])

    def test_check_na_fails(self):
        response = self.post('check-na', read_model('arbitrage_up.json'))
        self.assertEqual(response.status_code, 200)
        body = response.json()
        self.assertEqual(body['exit_code'], 3)
        self.assertFalse(body['na'])
        self.assertEqual(body['verdicts'][0]['direction'], [1.0])
        self.assertEqual(body['ngd']['0']['values']['0'], '-inf')
        self.assertEqual(body['ngd']['0']['witness_node'], 0)
        self.assertGreater(body['ngd']['0']['direction']['0'][0], 0)

    def test_check_na_time_out_of_range(self):
        response = self.post('check-na', read_model('binomial_call.json'), time=1)
        self.assertEqual(response.status_code, 400)
        self.assertEqual(response.json()['error']['code'], 'VALIDATION_ERROR')

    def test_price(self):
        body = self.post('price', read_model('two_period_binomial.json'), direct=True).json()
        self.assertEqual(body['exit_code'], 0)
        self.assertAlmostEqual(body['root_price'], 1 / 3, places=9)
        self.assertEqual(body['prices']['1']['1'], 1.0)
        self.assertTrue(body['direct']['agree'])
        self.assertTrue(body['price_bounds']['ok'])

    def test_price_exact(self):
        body = self.post('price', read_model('binomial_call.json'), exact=True).json()
        self.assertEqual(body['root_price'], 0.333333333333)
        self.assertTrue(body['tolerances']['exact'])
        self.assertEqual(body['tolerances']['tol'], 0.0)

    def test_arbitrage_price(self):
        response = self.post('price', read_model('arbitrage_up.json'))
        self.assertEqual(response.status_code, 200)
        body = response.json()
        self.assertEqual(body['exit_code'], 4)
        self.assertEqual(body['status'], 'arbitrage')
        self.assertEqual(body['root_price'], '-inf')
        self.assertNotIn('price_bounds', body)

    def test_price_needs_payoff(self):
        response = self.post('price', read_model('deterministic.json'))
        self.assertEqual(response.status_code, 400)
        body = response.json()
        self.assertEqual(body['exit_code'], 2)
        self.assertEqual(body['error']['code'], 'VALIDATION_ERROR')

    def test_dual_price(self):
        body = self.post('dual-price', read_model('binomial_call.json')).json()
        self.assertEqual(body['exit_code'], 0)
        self.assertEqual(body['dual_price'], 0.333333333333)
        self.assertLessEqual(body['gap'], 1e-7)
        self.assertTrue(body['details']['strictly_positive'])

    def test_dual_price_without_na(self):
        body = self.post('dual-price', read_model('arbitrage_up.json')).json()
        self.assertEqual(body['exit_code'], 3)
        self.assertEqual(body['status'], 'no_na')

    def test_ftap(self):
        body = self.post('ftap', read_model('two_period_binomial.json'), samples=3).json()
        self.assertEqual(body['exit_code'], 0)
        self.assertTrue(body['consistent'])
        self.assertTrue(body['ftap']['na'])
        self.assertTrue(body['classical']['nodes']['0']['classical'])

    def test_invalid_model(self):
        model = read_model('binomial_call.json')
        del model['nodes']
        response = self.post('validate', model)
        self.assertEqual(response.status_code, 400)
        self.assertEqual(response.json()['error']['code'], 'PARSE_ERROR')

    def test_invalid_request(self):
        response = self.client.post('/api/v0/price/', {'model': [1, 2]}, format='json')
        self.assertEqual(response.status_code, 400)
        self.assertEqual(response.json()['error'], 'Invalid request')
        response = self.client.post('/api/v0/price/', {'model': {}, 'samples': -1}, format='json')
        self.assertEqual(response.status_code, 400)

    def test_get_not_allowed(self):
        self.assertEqual(self.client.get('/api/v0/price/').status_code, 405)


class RiskhedgeCommandTests(SimpleTestCase):
    def run_command(self, *args):
        out, err = StringIO(), StringIO()
        with self.assertRaises(SystemExit) as raised:
            call_command('riskhedge', *args, stdout=out, stderr=err)
        return raised.exception.code, out.getvalue(), err.getvalue()

    def test_price(self):
        code, out, _ = self.run_command('price', str(MODELS / 'binomial_call.json'))
        self.assertEqual(code, 0)
        report = json.loads(out)
        self.assertEqual(report['root_price'], 0.333333333333)
        self.assertEqual(report['strategies']['0'], [0.666666666667])

    def test_output_is_deterministic(self):
        first = self.run_command('check-na', str(MODELS / 'two_period_binomial.json'))
        second = self.run_command('check-na', str(MODELS / 'two_period_binomial.json'))
        self.assertEqual(first, second)

    def test_csv(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'prices.csv')
            code, _, _ = self.run_command('price', str(MODELS / 'binomial_call.json'), '--csv', path)
            self.assertEqual(code, 0)
            frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ['node_id', 'time', 'price', 'attained', 'theta_1'])
        self.assertEqual(list(frame['node_id']), [0, 1, 2])
        self.assertAlmostEqual(frame['theta_1'][0], 2 / 3, places=9)
        self.assertTrue(frame['theta_1'][1:].isna().all())

    def test_exit_codes(self):
        self.assertEqual(self.run_command('check-na', str(MODELS / 'arbitrage_up.json'))[0], 3)
        self.assertEqual(self.run_command('price', str(MODELS / 'arbitrage_up.json'))[0], 4)
        self.assertEqual(self.run_command('price', str(MODELS / 'deterministic.json'))[0], 2)
        self.assertEqual(self.run_command('check-na', str(MODELS / 'binomial_call.json'), '--time', '1')[0], 2)

    def test_missing_file(self):
        code, out, err = self.run_command('validate', str(MODELS / 'missing.json'))
        self.assertEqual(code, 2)
        self.assertEqual(out, '')
        self.assertIn('cannot read', err)

    def test_ftap_exact(self):
        code, out, _ = self.run_command('ftap', str(MODELS / 'binomial_call.json'), '--exact', '--samples', '3')
        self.assertEqual(code, 0)
        self.assertTrue(json.loads(out)['consistent'])
