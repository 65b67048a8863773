import json
import logging

from rest_framework import status
from rest_framework.decorators import api_view, permission_classes
from rest_framework.permissions import AllowAny
from rest_framework.response import Response

from core.commands import EXIT_INCONSISTENT, EXIT_INVALID, CommandRouter
from .serializers import CommandRequestSerializer

logger = logging.getLogger(__name__)

router = CommandRouter()

EXIT_STATUS = {
    EXIT_INVALID: status.HTTP_400_BAD_REQUEST,
    EXIT_INCONSISTENT: status.HTTP_500_INTERNAL_SERVER_ERROR,
}


def run_command(command, request):
    serializer = CommandRequestSerializer(data=request.data)
    if not serializer.is_valid():
        return Response({
            'error': 'Invalid request',
            'detail': serializer.errors,
            'exit_code': EXIT_INVALID,
        }, status=status.HTTP_400_BAD_REQUEST)

    data = serializer.validated_data
    try:
        model_text = json.dumps(data['model'], sort_keys=True)
        report, code = router.route(
            command,
            model_text,
            time=data.get('time'),
            direct=data.get('direct', False),
            samples=data.get('samples'),
            tol=data.get('tol'),
            exact=data.get('exact', False),
        )
        body = report.to_dict()
        body['exit_code'] = code
        return Response(body, status=EXIT_STATUS.get(code, status.HTTP_200_OK))

    except Exception as e:
        logger.exception(f"Error in {command} view:")
        return Response({
            'error': 'Internal server error',
            'detail': str(e),
            'exit_code': EXIT_INCONSISTENT,
        }, status=status.HTTP_500_INTERNAL_SERVER_ERROR)


@api_view(['POST'])
@permission_classes([AllowAny])
def validate(request):
    return run_command('validate', request)


@api_view(['POST'])
@permission_classes([AllowAny])
def check_na(request):
    return run_command('check-na', request)


@api_view(['POST'])
@permission_classes([AllowAny])
def price(request):
    """Minimal risk-hedging prices; set "direct" to cross-check with the multi-period LP"""
    return run_command('price', request)


@api_view(['POST'])
@permission_classes([AllowAny])
def dual_price(request):
    return run_command('dual-price', request)


@api_view(['POST'])
@permission_classes([AllowAny])
def ftap(request):
    return run_command('ftap', request)
