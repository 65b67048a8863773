from rest_framework import serializers


class CommandRequestSerializer(serializers.Serializer):
    model = serializers.JSONField()
    time = serializers.IntegerField(required=False, allow_null=True, min_value=0)
    direct = serializers.BooleanField(required=False, default=False)
    samples = serializers.IntegerField(required=False, allow_null=True, min_value=0)
    tol = serializers.FloatField(required=False, allow_null=True, min_value=0)
    exact = serializers.BooleanField(required=False, default=False)

    def validate_model(self, value):
        if not isinstance(value, dict):
            raise serializers.ValidationError('model must be a JSON object')
        return value
